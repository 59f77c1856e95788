#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ems/arrivals.hpp"
#include "ems/geo.hpp"

namespace ems {

enum class ZoneKind { rectangular, hexagonal };

struct Zone {
  int id = 0;
  GeoPoint centroid;
  std::vector<GeoPoint> polygon;
  ZoneKind kind = ZoneKind::rectangular;
};

/// A station or hospital.
struct Site {
  int id = 0;
  GeoPoint where;
};

/// `lo`/`hi` are opposite corners (any order). Cells are numbered row-major
/// from the south-west corner; centroids sit at cell centers.
std::vector<Zone> build_rect_grid(GeoPoint lo, GeoPoint hi, int nx, int ny);

/// Pointy-top hexagons with edge length `edge_len` (degrees), lattice
/// anchored on the box center, each hexagon clipped to the box. Cells with no
/// area inside the box are dropped.
std::vector<Zone> build_hex_grid(GeoPoint lo, GeoPoint hi, double edge_len);

class TravelProvider {
 public:
  enum class Mode { great_circle, matrix };

  static TravelProvider great_circle(double speed_kmh = 60.0);
  /// `seconds` is row-major n x n over `locations`.
  static TravelProvider from_matrix(std::vector<std::pair<std::string, GeoPoint>> locations,
                                    std::vector<double> seconds);
  /// CSV with the first row and column holding location ids. Every id must
  /// appear in `registry`.
  static TravelProvider load_matrix_csv(
      const std::filesystem::path& path,
      std::span<const std::pair<std::string, GeoPoint>> registry);

  Mode mode() const { return mode_; }
  double speed_kmh() const { return speed_kmh_; }

  /// Seconds to travel from p to q. Matrix mode throws LookupError for a
  /// point that is not a registered location.
  double travel_time(GeoPoint p, GeoPoint q) const;

  bool is_registered(GeoPoint p) const;
  const std::vector<std::pair<std::string, GeoPoint>>& locations() const {
    return locations_;
  }

 private:
  int location_index(GeoPoint p) const;

  Mode mode_ = Mode::great_circle;
  double speed_kmh_ = 60.0;
  std::vector<std::pair<std::string, GeoPoint>> locations_;
  std::map<std::pair<double, double>, int> index_;
  std::vector<double> seconds_;
};

struct CityInstance {
  std::vector<Zone> zones;
  std::vector<Site> stations;
  std::vector<Site> hospitals;
  TravelProvider travel = TravelProvider::great_circle();
  ArrivalRateTable rates;
  /// zone index -> index of the nearest station (by travel time from the
  /// zone centroid, ties to the lower index). Filled by finalize().
  std::vector<int> station_zone_map;

  /// Validates ids and rates and computes station_zone_map.
  void finalize();

  double travel_time(GeoPoint p, GeoPoint q) const { return travel.travel_time(p, q); }
  int nearest_station(GeoPoint p) const;
  int nearest_hospital(GeoPoint p) const;
  /// Index of the zone containing p, or -1.
  int locate_zone(GeoPoint p) const;

  /// Stations ("s<id>"), hospitals ("h<id>") and zone centroids ("z<id>"):
  /// the points a travel matrix must cover.
  std::vector<std::pair<std::string, GeoPoint>> registered_locations() const;
};

}  // namespace ems
