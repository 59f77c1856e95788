#include "ems/citymodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

namespace {

void normalize_box(GeoPoint& lo, GeoPoint& hi) {
  if (!is_valid(lo) || !is_valid(hi)) {
    throw InvalidInstanceError("bounding box corner outside lat/lon range");
  }
  if (lo.lat > hi.lat) std::swap(lo.lat, hi.lat);
  if (lo.lon > hi.lon) std::swap(lo.lon, hi.lon);
  if (!(hi.lat > lo.lat) || !(hi.lon > lo.lon)) {
    throw InvalidInstanceError("degenerate bounding box");
  }
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<Zone> build_rect_grid(GeoPoint lo, GeoPoint hi, int nx, int ny) {
  if (nx < 1 || ny < 1) throw InvalidInstanceError("grid dimensions must be >= 1");
  normalize_box(lo, hi);
  const double dx = (hi.lon - lo.lon) / nx;
  const double dy = (hi.lat - lo.lat) / ny;
  std::vector<Zone> zones;
  zones.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    // Shared edges are computed from the same expression so neighbours agree
    // bit for bit; the outer edges snap to the box.
    const double y0 = j == 0 ? lo.lat : lo.lat + dy * j;
    const double y1 = j + 1 == ny ? hi.lat : lo.lat + dy * (j + 1);
    for (int i = 0; i < nx; ++i) {
      const double x0 = i == 0 ? lo.lon : lo.lon + dx * i;
      const double x1 = i + 1 == nx ? hi.lon : lo.lon + dx * (i + 1);
      Zone z;
      z.id = static_cast<int>(zones.size());
      z.kind = ZoneKind::rectangular;
      z.polygon = {{y0, x0}, {y0, x1}, {y1, x1}, {y1, x0}};
      z.centroid = {(y0 + y1) / 2.0, (x0 + x1) / 2.0};
      zones.push_back(std::move(z));
    }
  }
  return zones;
}

std::vector<Zone> build_hex_grid(GeoPoint lo, GeoPoint hi, double edge_len) {
  if (!(edge_len > 0.0) || !std::isfinite(edge_len)) {
    throw InvalidInstanceError("hexagon edge length must be positive");
  }
  normalize_box(lo, hi);
  const double cx = (lo.lon + hi.lon) / 2.0;
  const double cy = (lo.lat + hi.lat) / 2.0;
  const double width = std::sqrt(3.0) * edge_len;
  const double row_step = 1.5 * edge_len;
  const double box_area = (hi.lat - lo.lat) * (hi.lon - lo.lon);

  const int r_max = static_cast<int>(std::ceil(((hi.lat - lo.lat) / 2.0 + edge_len) / row_step)) + 1;
  const int q_max = static_cast<int>(std::ceil(((hi.lon - lo.lon) / 2.0 + width) / width)) + 1;

  std::vector<Zone> zones;
  for (int r = -r_max; r <= r_max; ++r) {
    const double yc = cy + row_step * r;
    const double shift = (r & 1) ? width / 2.0 : 0.0;
    for (int q = -q_max; q <= q_max; ++q) {
      const double xc = cx + width * q + shift;
      std::vector<GeoPoint> hex;
      hex.reserve(6);
      for (int k = 0; k < 6; ++k) {
        const double theta = (90.0 + 60.0 * k) * 3.14159265358979323846 / 180.0;
        hex.push_back({yc + edge_len * std::sin(theta), xc + edge_len * std::cos(theta)});
      }
      auto clipped = clip_to_box(hex, lo, hi);
      if (clipped.size() < 3) continue;
      if (polygon_area(clipped) <= 1e-14 * box_area) continue;
      Zone z;
      z.id = static_cast<int>(zones.size());
      z.kind = ZoneKind::hexagonal;
      const double full = polygon_area(hex);
      z.centroid = std::abs(polygon_area(clipped) - full) <= 1e-12 * full
                       ? GeoPoint{yc, xc}
                       : polygon_centroid(clipped);
      z.polygon = std::move(clipped);
      zones.push_back(std::move(z));
    }
  }
  return zones;
}

TravelProvider TravelProvider::great_circle(double speed_kmh) {
  if (!(speed_kmh > 0.0)) throw ConfigError("travel speed must be positive");
  TravelProvider t;
  t.mode_ = Mode::great_circle;
  t.speed_kmh_ = speed_kmh;
  return t;
}

TravelProvider TravelProvider::from_matrix(
    std::vector<std::pair<std::string, GeoPoint>> locations, std::vector<double> seconds) {
  const std::size_t n = locations.size();
  if (seconds.size() != n * n) {
    throw InvalidInstanceError("travel matrix must be square over the registered locations");
  }
  TravelProvider t;
  t.mode_ = Mode::matrix;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = seconds[i * n + j];
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidInstanceError(fmt::format("travel matrix entry ({}, {}) is negative or not finite", i, j));
      }
    }
    seconds[i * n + i] = 0.0;
    const auto key = std::make_pair(locations[i].second.lat, locations[i].second.lon);
    // Several ids may share one point (e.g. a station at a zone centroid);
    // the first registration wins.
    t.index_.emplace(key, static_cast<int>(i));
  }
  t.locations_ = std::move(locations);
  t.seconds_ = std::move(seconds);
  return t;
}

TravelProvider TravelProvider::load_matrix_csv(
    const std::filesystem::path& path,
    std::span<const std::pair<std::string, GeoPoint>> registry) {
  std::ifstream in(path);
  if (!in) throw InvalidInstanceError(fmt::format("cannot open travel matrix {}", path.string()));
  std::map<std::string, GeoPoint> by_id;
  for (const auto& [id, p] : registry) by_id.emplace(id, p);

  std::string line;
  if (!std::getline(in, line)) throw InvalidInstanceError("empty travel matrix file");
  auto header = split_csv(line);
  if (header.size() < 2) throw InvalidInstanceError("travel matrix header has no location ids");
  std::vector<std::pair<std::string, GeoPoint>> locations;
  for (std::size_t k = 1; k < header.size(); ++k) {
    auto it = by_id.find(header[k]);
    if (it == by_id.end()) {
      throw LookupError(fmt::format("travel matrix column '{}' is not a registered location", header[k]));
    }
    locations.emplace_back(header[k], it->second);
  }
  const std::size_t n = locations.size();
  std::vector<double> seconds(n * n, 0.0);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (row >= n || cells.size() != n + 1 || cells[0] != locations[row].first) {
      throw InvalidInstanceError(fmt::format("travel matrix row {} does not match the header order", row));
    }
    for (std::size_t k = 0; k < n; ++k) {
      try {
        seconds[row * n + k] = std::stod(cells[k + 1]);
      } catch (const std::exception&) {
        throw InvalidInstanceError(fmt::format("bad travel time '{}' in row {}", cells[k + 1], row));
      }
    }
    ++row;
  }
  if (row != n) throw InvalidInstanceError("travel matrix is not square");
  for (const auto& [id, p] : registry) {
    bool found = false;
    for (const auto& loc : locations) found = found || loc.first == id;
    if (!found) throw InvalidInstanceError(fmt::format("travel matrix misses location '{}'", id));
  }
  return from_matrix(std::move(locations), std::move(seconds));
}

int TravelProvider::location_index(GeoPoint p) const {
  auto it = index_.find({p.lat, p.lon});
  if (it == index_.end()) {
    throw LookupError(fmt::format("point ({}, {}) is not a registered travel-matrix location", p.lat, p.lon));
  }
  return it->second;
}

bool TravelProvider::is_registered(GeoPoint p) const {
  return mode_ == Mode::great_circle || index_.contains({p.lat, p.lon});
}

double TravelProvider::travel_time(GeoPoint p, GeoPoint q) const {
  if (mode_ == Mode::great_circle) {
    if (p == q) return 0.0;
    return haversine_m(p, q) / (speed_kmh_ / 3.6);
  }
  const int i = location_index(p);
  const int j = location_index(q);
  return seconds_[static_cast<std::size_t>(i) * locations_.size() + j];
}

void CityInstance::finalize() {
  if (zones.empty()) throw InvalidInstanceError("instance has no zones");
  if (stations.empty()) throw InvalidInstanceError("instance has no stations");
  if (hospitals.empty()) throw InvalidInstanceError("instance has no hospitals");
  auto check_unique = [](std::span<const Site> sites, const char* what) {
    std::set<int> ids;
    for (const auto& s : sites) {
      if (!is_valid(s.where)) throw InvalidInstanceError(fmt::format("{} {} has invalid coordinates", what, s.id));
      if (!ids.insert(s.id).second) throw InvalidInstanceError(fmt::format("duplicate {} id {}", what, s.id));
    }
  };
  check_unique(stations, "station");
  check_unique(hospitals, "hospital");
  std::set<int> zone_ids;
  for (const auto& z : zones) {
    if (!zone_ids.insert(z.id).second) throw InvalidInstanceError(fmt::format("duplicate zone id {}", z.id));
  }
  if (rates.n_zones() != static_cast<int>(zones.size())) {
    throw InvalidInstanceError("arrival rate table does not match the zone count");
  }
  station_zone_map.assign(zones.size(), 0);
  for (std::size_t z = 0; z < zones.size(); ++z) {
    station_zone_map[z] = nearest_station(zones[z].centroid);
  }
}

int CityInstance::nearest_station(GeoPoint p) const {
  int best = -1;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < stations.size(); ++s) {
    const double t = travel.travel_time(p, stations[s].where);
    if (t < best_t) {
      best_t = t;
      best = static_cast<int>(s);
    }
  }
  return best;
}

int CityInstance::nearest_hospital(GeoPoint p) const {
  int best = -1;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < hospitals.size(); ++h) {
    const double t = travel.travel_time(p, hospitals[h].where);
    if (t < best_t) {
      best_t = t;
      best = static_cast<int>(h);
    }
  }
  return best;
}

int CityInstance::locate_zone(GeoPoint p) const {
  for (std::size_t z = 0; z < zones.size(); ++z) {
    if (polygon_contains(zones[z].polygon, p)) return static_cast<int>(z);
  }
  return -1;
}

std::vector<std::pair<std::string, GeoPoint>> CityInstance::registered_locations() const {
  std::vector<std::pair<std::string, GeoPoint>> out;
  for (const auto& s : stations) out.emplace_back(fmt::format("s{}", s.id), s.where);
  for (const auto& h : hospitals) out.emplace_back(fmt::format("h{}", h.id), h.where);
  for (const auto& z : zones) out.emplace_back(fmt::format("z{}", z.id), z.centroid);
  return out;
}

}  // namespace ems
