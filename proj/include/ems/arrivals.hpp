#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ems/geo.hpp"

namespace ems {

struct Zone;

inline constexpr double kWeekSeconds = 7.0 * 24.0 * 3600.0;

/// Piecewise-constant weekly arrival intensities, one rate per
/// (zone, emergency type, time bin). Rates are in events per second.
class ArrivalRateTable {
 public:
  ArrivalRateTable() = default;
  ArrivalRateTable(int n_zones, int n_types, double bin_length = 1800.0);

  int n_zones() const { return n_zones_; }
  int n_types() const { return n_types_; }
  int n_bins() const { return n_bins_; }
  double bin_length() const { return bin_length_; }

  /// Offset (seconds) of scenario time 0 into the weekly cycle.
  double start_offset() const { return start_offset_; }
  void set_start_offset(double seconds) { start_offset_ = seconds; }

  double rate(int zone, int etype, int bin) const {
    return rates_[index(zone, etype, bin)];
  }
  void set_rate(int zone, int etype, int bin, double rate);
  /// Sets the same rate in every bin of the week.
  void set_constant(int zone, int etype, double rate);

  /// Bin containing scenario time t (after applying the start offset).
  int bin_at(double t) const;

  double weekly_mean(int zone, int etype) const;
  double weekly_mean_total(int zone) const;

  static ArrivalRateTable load_csv(const std::filesystem::path& path, int n_zones,
                                   int n_types, double bin_length = 1800.0);
  void save_csv(const std::filesystem::path& path) const;

 private:
  std::size_t index(int zone, int etype, int bin) const;

  int n_zones_ = 0;
  int n_types_ = 0;
  int n_bins_ = 0;
  double bin_length_ = 1800.0;
  double start_offset_ = 0.0;
  std::vector<double> rates_;
};

struct EmergencyCall {
  int id = 0;
  double time = 0.0;  // seconds since scenario start
  int zone = 0;
  GeoPoint location;
  int etype = 0;
};

enum class CallPlacement {
  uniform_in_zone,  // rejection sampling inside the zone polygon
  zone_centroid,    // snap to the centroid (travel-matrix instances)
};

/// Draws one scenario of calls over [0, horizon). Per (zone, type) the
/// count in each bin is Poisson(rate * overlap) and times are uniform within
/// the bin; every (zone, type) pair uses an independent random substream.
/// Output is sorted by time with ids assigned in that order.
std::vector<EmergencyCall> sample_scenario(
    const ArrivalRateTable& rates, std::span<const Zone> zones, double horizon,
    std::uint64_t seed, CallPlacement placement = CallPlacement::uniform_in_zone);

}  // namespace ems
