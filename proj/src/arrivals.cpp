#include "ems/arrivals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "ems/citymodel.hpp"
#include "ems/errors.hpp"

namespace ems {

ArrivalRateTable::ArrivalRateTable(int n_zones, int n_types, double bin_length)
    : n_zones_(n_zones), n_types_(n_types), bin_length_(bin_length) {
  if (n_zones < 0 || n_types < 0) throw ConfigError("negative rate table dimensions");
  if (!(bin_length > 0.0) || std::fmod(kWeekSeconds, bin_length) != 0.0) {
    throw ConfigError("bin length must be positive and divide the week");
  }
  n_bins_ = static_cast<int>(kWeekSeconds / bin_length);
  rates_.assign(static_cast<std::size_t>(n_zones) * n_types * n_bins_, 0.0);
}

std::size_t ArrivalRateTable::index(int zone, int etype, int bin) const {
  if (zone < 0 || zone >= n_zones_ || etype < 0 || etype >= n_types_ || bin < 0 ||
      bin >= n_bins_) {
    throw LookupError(fmt::format("rate index ({}, {}, {}) out of range", zone, etype, bin));
  }
  return (static_cast<std::size_t>(zone) * n_types_ + etype) * n_bins_ + bin;
}

void ArrivalRateTable::set_rate(int zone, int etype, int bin, double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    throw ConfigError(fmt::format("arrival rate must be finite and >= 0, got {}", rate));
  }
  rates_[index(zone, etype, bin)] = rate;
}

void ArrivalRateTable::set_constant(int zone, int etype, double rate) {
  for (int b = 0; b < n_bins_; ++b) set_rate(zone, etype, b, rate);
}

int ArrivalRateTable::bin_at(double t) const {
  double w = std::fmod(t + start_offset_, kWeekSeconds);
  if (w < 0.0) w += kWeekSeconds;
  return std::min(n_bins_ - 1, static_cast<int>(w / bin_length_));
}

double ArrivalRateTable::weekly_mean(int zone, int etype) const {
  double s = 0.0;
  for (int b = 0; b < n_bins_; ++b) s += rate(zone, etype, b);
  return n_bins_ > 0 ? s / n_bins_ : 0.0;
}

double ArrivalRateTable::weekly_mean_total(int zone) const {
  double s = 0.0;
  for (int c = 0; c < n_types_; ++c) s += weekly_mean(zone, c);
  return s;
}

ArrivalRateTable ArrivalRateTable::load_csv(const std::filesystem::path& path, int n_zones,
                                            int n_types, double bin_length) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open rate table {}", path.string()));
  ArrivalRateTable table(n_zones, n_types, bin_length);
  std::string line;
  bool first = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (first) {
      first = false;
      if (line.find("zone_id") != std::string::npos) continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int zone = 0, etype = 0, bin = 0;
    double rate = 0.0;
    if (!(ss >> zone >> etype >> bin >> rate)) {
      throw ConfigError(fmt::format("{}:{}: expected zone_id,etype,bin_index,rate_per_sec",
                                    path.string(), line_no));
    }
    table.set_rate(zone, etype, bin, rate);
  }
  return table;
}

void ArrivalRateTable::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write rate table {}", path.string()));
  out << "zone_id,etype,bin_index,rate_per_sec\n";
  for (int z = 0; z < n_zones_; ++z) {
    for (int c = 0; c < n_types_; ++c) {
      for (int b = 0; b < n_bins_; ++b) {
        const double r = rate(z, c, b);
        if (r > 0.0) out << fmt::format("{},{},{},{:.17g}\n", z, c, b, r);
      }
    }
  }
}

namespace {

GeoPoint sample_in_polygon(const Zone& zone, std::mt19937_64& rng) {
  double lat_lo = zone.polygon.front().lat, lat_hi = lat_lo;
  double lon_lo = zone.polygon.front().lon, lon_hi = lon_lo;
  for (const auto& p : zone.polygon) {
    lat_lo = std::min(lat_lo, p.lat);
    lat_hi = std::max(lat_hi, p.lat);
    lon_lo = std::min(lon_lo, p.lon);
    lon_hi = std::max(lon_hi, p.lon);
  }
  std::uniform_real_distribution<double> ulat(lat_lo, lat_hi);
  std::uniform_real_distribution<double> ulon(lon_lo, lon_hi);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    GeoPoint p{ulat(rng), ulon(rng)};
    if (polygon_contains(zone.polygon, p)) return p;
  }
  return zone.centroid;
}

}  // namespace

std::vector<EmergencyCall> sample_scenario(const ArrivalRateTable& rates,
                                           std::span<const Zone> zones, double horizon,
                                           std::uint64_t seed, CallPlacement placement) {
  if (!(horizon > 0.0)) throw ConfigError("scenario horizon must be positive");
  if (static_cast<int>(zones.size()) != rates.n_zones()) {
    throw ConfigError("zone list does not match the rate table");
  }
  std::vector<EmergencyCall> calls;
  const double len = rates.bin_length();
  for (int z = 0; z < rates.n_zones(); ++z) {
    for (int c = 0; c < rates.n_types(); ++c) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(z), static_cast<std::uint32_t>(c),
                        0x9e3779b9u};
      std::mt19937_64 rng(seq);
      // Walk the horizon bin by bin in weekly-cycle coordinates.
      double t = 0.0;
      while (t < horizon) {
        const int bin = rates.bin_at(t);
        double week_pos = std::fmod(t + rates.start_offset(), kWeekSeconds);
        if (week_pos < 0.0) week_pos += kWeekSeconds;
        const double bin_end = t + ((bin + 1) * len - week_pos);
        const double end = std::min(bin_end, horizon);
        const double mean = rates.rate(z, c, bin) * (end - t);
        if (mean > 0.0) {
          std::poisson_distribution<long> count(mean);
          const long n = count(rng);
          std::uniform_real_distribution<double> when(t, end);
          for (long k = 0; k < n; ++k) {
            EmergencyCall call;
            call.time = when(rng);
            call.zone = z;
            call.etype = c;
            call.location = placement == CallPlacement::zone_centroid
                                ? zones[z].centroid
                                : sample_in_polygon(zones[z], rng);
            calls.push_back(call);
          }
        }
        t = end;
      }
    }
  }
  std::stable_sort(calls.begin(), calls.end(), [](const EmergencyCall& a, const EmergencyCall& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.zone != b.zone) return a.zone < b.zone;
    return a.etype < b.etype;
  });
  for (std::size_t i = 0; i < calls.size(); ++i) calls[i].id = static_cast<int>(i);
  return calls;
}

}  // namespace ems
