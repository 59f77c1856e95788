#include "ems/instances.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "ems/errors.hpp"

namespace ems {

using nlohmann::json;

namespace {

struct CityShape {
  GeoPoint lo, hi;
  int nx = 10, ny = 10;
  int n_stations = 34;
  int n_hospitals = 10;
  double total_rate = 1.2e-3;  // calls per second over the whole city
  std::vector<double> type_mix{0.15, 0.35, 0.15, 0.35};
  int n_hotspots = 3;
};

double daily_profile(double t) {
  // Peak in the early evening, trough before dawn; mean 1 over a day.
  const double phase = 2.0 * std::numbers::pi * (std::fmod(t, 86400.0) / 86400.0 - 0.5);
  return 1.0 + 0.5 * std::sin(phase);
}

GeoPoint uniform_point(const CityShape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lat(s.lo.lat, s.hi.lat), lon(s.lo.lon, s.hi.lon);
  const double a = lat(rng);
  return {a, lon(rng)};
}

Setup synthesize(const std::string& name, const CityShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Setup setup;
  setup.name = name;
  CityInstance& city = setup.city;
  city.zones = build_rect_grid(shape.lo, shape.hi, shape.nx, shape.ny);

  // Zone weights: a floor plus Gaussian hotspots.
  std::vector<GeoPoint> hot;
  for (int k = 0; k < shape.n_hotspots; ++k) hot.push_back(uniform_point(shape, rng));
  const double spread = 0.25 * haversine_m(shape.lo, shape.hi);
  std::vector<double> weight;
  for (const auto& z : city.zones) {
    double w = 0.3;
    for (const auto& h : hot) {
      const double d = haversine_m(z.centroid, h);
      w += std::exp(-0.5 * d * d / (spread * spread));
    }
    weight.push_back(w);
  }
  const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);

  const int n_types = static_cast<int>(shape.type_mix.size());
  city.rates = ArrivalRateTable(static_cast<int>(city.zones.size()), n_types, 1800.0);
  for (std::size_t z = 0; z < city.zones.size(); ++z) {
    for (int c = 0; c < n_types; ++c) {
      for (int b = 0; b < city.rates.n_bins(); ++b) {
        const double mid = (b + 0.5) * city.rates.bin_length();
        city.rates.set_rate(static_cast<int>(z), c, b,
                            shape.total_rate * weight[z] / wsum * shape.type_mix[c] * daily_profile(mid));
      }
    }
  }

  // Stations: candidates drawn in proportion to demand, then a farthest-point
  // ordering so that every prefix is spread over the city.
  std::discrete_distribution<int> pick_zone(weight.begin(), weight.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double dlat = (shape.hi.lat - shape.lo.lat) / shape.ny;
  const double dlon = (shape.hi.lon - shape.lo.lon) / shape.nx;
  std::vector<GeoPoint> cand;
  for (int k = 0; k < 20 * shape.n_stations; ++k) {
    const GeoPoint c = city.zones[pick_zone(rng)].centroid;
    cand.push_back({c.lat + (u(rng) - 0.5) * dlat, c.lon + (u(rng) - 0.5) * dlon});
  }
  std::vector<double> gap(cand.size(), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  for (int k = 0; k < shape.n_stations; ++k) {
    city.stations.push_back({k + 1, cand[next]});
    for (std::size_t j = 0; j < cand.size(); ++j) gap[j] = std::min(gap[j], haversine_m(cand[j], cand[next]));
    next = static_cast<std::size_t>(std::max_element(gap.begin(), gap.end()) - gap.begin());
  }
  for (int k = 0; k < shape.n_hospitals; ++k) {
    const GeoPoint c = city.zones[pick_zone(rng)].centroid;
    city.hospitals.push_back({k + 1, {c.lat + (u(rng) - 0.5) * dlat, c.lon + (u(rng) - 0.5) * dlon}});
  }
  city.travel = TravelProvider::great_circle(60.0);
  setup.service = ServiceParams::defaults(n_types);
  return setup;
}

json point_json(GeoPoint p) { return json::array({p.lat, p.lon}); }

GeoPoint point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidInstanceError("a point must be [lat, lon]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Site> sites_from(const json& j, const char* what) {
  if (!j.is_array()) throw InvalidInstanceError(fmt::format("'{}' must be an array", what));
  std::vector<Site> out;
  for (const auto& s : j) out.push_back({s.at("id").get<int>(), {s.at("lat").get<double>(), s.at("lon").get<double>()}});
  return out;
}

json sites_json(const std::vector<Site>& sites) {
  json out = json::array();
  for (const auto& s : sites) out.push_back({{"id", s.id}, {"lat", s.where.lat}, {"lon", s.where.lon}});
  return out;
}

}  // namespace

const std::vector<std::string>& setup_names() {
  static const std::vector<std::string> names{"rj", "us", "synthetic"};
  return names;
}

Setup make_setup(const std::string& name, std::uint64_t seed) {
  CityShape shape;
  shape.lo = {-23.08, -43.80};
  shape.hi = {-22.75, -43.10};
  if (name == "rj") return synthesize(name, shape, seed);
  if (name == "us") {
    Setup s = synthesize(name, shape, seed);
    const int n = static_cast<int>(shape.type_mix.size());
    s.service.on_scene_mean.assign(n, 1200.0);
    s.service.on_scene_sd.assign(n, 600.0);
    s.service.hospital_mean.assign(n, 1800.0);
    s.service.hospital_sd.assign(n, 900.0);
    s.service.cleaning_mean.assign(n, 900.0);
    s.service.cleaning_sd.assign(n, 450.0);
    s.service.p_transport.assign(n, 0.7);
    s.service.p_cleaning.assign(n, 0.2);
    return s;
  }
  if (name == "synthetic") {
    shape.lo = {-22.95, -43.35};
    shape.hi = {-22.85, -43.20};
    shape.nx = shape.ny = 5;
    shape.n_stations = 6;
    shape.n_hospitals = 3;
    shape.total_rate = 4e-4;
    shape.n_hotspots = 1;
    return synthesize(name, shape, seed);
  }
  throw ConfigError(fmt::format("unknown setup '{}'; known: {}", name, fmt::join(setup_names(), ", ")));
}

void restrict_bases(CityInstance& city, int nb_bases) {
  if (nb_bases < 1) throw ConfigError("nb_bases must be at least 1");
  if (nb_bases > kMaxBases) throw ConfigError(fmt::format("nb_bases may not exceed {}", kMaxBases));
  if (nb_bases > static_cast<int>(city.stations.size())) {
    throw ConfigError(fmt::format("nb_bases = {} but the instance has {} stations", nb_bases, city.stations.size()));
  }
  city.stations.resize(static_cast<std::size_t>(nb_bases));
  city.finalize();
}

std::vector<StationModel> derive_station_models(const CityInstance& city, const ServiceParams& service,
                                                const CostModel& cost, double phi_wait) {
  const int nc = cost.n_call_types;
  const int na = cost.n_amb_types;
  if (city.rates.n_types() != nc) throw ConfigError("rate table and cost model disagree on call types");
  if (city.station_zone_map.size() != city.zones.size()) throw ConfigError("city must be finalized first");
  service.validate(nc);
  std::vector<StationModel> out;
  for (std::size_t b = 0; b < city.stations.size(); ++b) {
    StationModel m;
    m.station_id = city.stations[b].id;
    m.n_amb_types = na;
    m.n_call_types = nc;
    m.lambda.assign(static_cast<std::size_t>(nc), 0.0);
    double weighted_t = 0.0, total = 0.0;
    for (std::size_t z = 0; z < city.zones.size(); ++z) {
      if (city.station_zone_map[z] != static_cast<int>(b)) continue;
      const double t = city.travel_time(city.stations[b].where, city.zones[z].centroid);
      for (int c = 0; c < nc; ++c) {
        const double lam = city.rates.weekly_mean(static_cast<int>(z), c);
        m.lambda[c] += lam;
        weighted_t += lam * t;
        total += lam;
      }
    }
    const double mean_t = total > 0.0 ? weighted_t / total : 0.0;
    for (int a = 0; a < na; ++a) {
      for (int c = 0; c < nc; ++c) m.mu.push_back(1.0 / (2.0 * mean_t + service.mean_post_arrival(c)));
    }
    for (int c = 0; c < nc; ++c) {
      m.compat.push_back(cost.preference(c));
      m.phi.push_back(cost.theta[c] * phi_wait);
    }
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

Setup load_setup_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open instance file {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInstanceError(fmt::format("{}: {}", path.string(), e.what()));
  }
  const auto dir = path.parent_path();
  Setup setup;
  try {
    setup.name = j.value("name", path.stem().string());
    CityInstance& city = setup.city;
    for (const auto& z : j.at("zones")) {
      Zone zone;
      zone.id = z.at("id").get<int>();
      if (z.contains("polygon")) {
        for (const auto& p : z["polygon"]) zone.polygon.push_back(point_from(p));
      }
      zone.centroid = z.contains("centroid") ? point_from(z["centroid"]) : polygon_centroid(zone.polygon);
      zone.kind = z.value("kind", std::string("rectangular")) == "hexagonal" ? ZoneKind::hexagonal
                                                                             : ZoneKind::rectangular;
      city.zones.push_back(std::move(zone));
    }
    city.stations = sites_from(j.at("stations"), "stations");
    city.hospitals = sites_from(j.at("hospitals"), "hospitals");

    const auto& r = j.at("rates");
    const int n_types = r.value("n_types", 4);
    const double bin = r.value("bin_length", 1800.0);
    const int nz = static_cast<int>(city.zones.size());
    if (r.contains("csv")) {
      city.rates = ArrivalRateTable::load_csv(dir / r["csv"].get<std::string>(), nz, n_types, bin);
    } else if (r.contains("constant")) {
      city.rates = ArrivalRateTable(nz, n_types, bin);
      const auto& v = r["constant"];
      if (static_cast<int>(v.size()) != nz) throw InvalidInstanceError("rates.constant needs one row per zone");
      for (int z = 0; z < nz; ++z) {
        if (static_cast<int>(v[z].size()) != n_types) throw InvalidInstanceError("rates.constant row has wrong width");
        for (int c = 0; c < n_types; ++c) city.rates.set_constant(z, c, v[z][c].get<double>());
      }
    } else {
      city.rates = ArrivalRateTable(nz, n_types, bin);
      const auto& v = r.at("values");
      for (int z = 0; z < nz; ++z) {
        for (int c = 0; c < n_types; ++c) {
          const auto& row = v.at(z).at(c);
          if (static_cast<int>(row.size()) != city.rates.n_bins()) throw InvalidInstanceError("rates.values row has wrong length");
          for (int b = 0; b < city.rates.n_bins(); ++b) city.rates.set_rate(z, c, b, row[b].get<double>());
        }
      }
    }
    city.rates.set_start_offset(r.value("start_offset", 0.0));

    const auto travel = j.value("travel", json::object());
    if (travel.value("mode", std::string("great_circle")) == "matrix") {
      city.travel = TravelProvider::load_matrix_csv(dir / travel.at("csv").get<std::string>(),
                                                    city.registered_locations());
    } else {
      city.travel = TravelProvider::great_circle(travel.value("speed_kmh", 60.0));
    }

    setup.service = ServiceParams::defaults(n_types);
    if (j.contains("service")) {
      const auto& s = j["service"];
      auto field = [&](const char* key, std::vector<double>& dst) {
        if (s.contains(key)) dst = s[key].get<std::vector<double>>();
      };
      field("on_scene_mean", setup.service.on_scene_mean);
      field("on_scene_sd", setup.service.on_scene_sd);
      field("hospital_mean", setup.service.hospital_mean);
      field("hospital_sd", setup.service.hospital_sd);
      field("cleaning_mean", setup.service.cleaning_mean);
      field("cleaning_sd", setup.service.cleaning_sd);
      field("p_transport", setup.service.p_transport);
      field("p_cleaning", setup.service.p_cleaning);
      const auto family = s.value("family", std::string("lognormal"));
      if (family != "lognormal" && family != "exponential") throw ConfigError("service.family must be lognormal or exponential");
      setup.service.family = family == "exponential" ? DurationFamily::exponential : DurationFamily::lognormal;
      setup.service.validate(n_types);
    }
  } catch (const json::exception& e) {
    throw InvalidInstanceError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return setup;
}

void save_setup_json(const Setup& setup, const std::filesystem::path& path) {
  const CityInstance& city = setup.city;
  json j;
  j["name"] = setup.name;
  json zones = json::array();
  for (const auto& z : city.zones) {
    json poly = json::array();
    for (const auto& p : z.polygon) poly.push_back(point_json(p));
    zones.push_back({{"id", z.id},
                     {"centroid", point_json(z.centroid)},
                     {"polygon", poly},
                     {"kind", z.kind == ZoneKind::hexagonal ? "hexagonal" : "rectangular"}});
  }
  j["zones"] = zones;
  j["stations"] = sites_json(city.stations);
  j["hospitals"] = sites_json(city.hospitals);
  if (city.travel.mode() == TravelProvider::Mode::matrix) {
    throw ConfigError("saving matrix-mode instances is not supported; keep the original file");
  }
  j["travel"] = {{"mode", "great_circle"}, {"speed_kmh", city.travel.speed_kmh()}};
  json values = json::array();
  for (int z = 0; z < city.rates.n_zones(); ++z) {
    json per_type = json::array();
    for (int c = 0; c < city.rates.n_types(); ++c) {
      json row = json::array();
      for (int b = 0; b < city.rates.n_bins(); ++b) row.push_back(city.rates.rate(z, c, b));
      per_type.push_back(row);
    }
    values.push_back(per_type);
  }
  j["rates"] = {{"n_types", city.rates.n_types()},
                {"bin_length", city.rates.bin_length()},
                {"start_offset", city.rates.start_offset()},
                {"values", values}};
  const auto& s = setup.service;
  j["service"] = {{"on_scene_mean", s.on_scene_mean}, {"on_scene_sd", s.on_scene_sd},
                  {"hospital_mean", s.hospital_mean}, {"hospital_sd", s.hospital_sd},
                  {"cleaning_mean", s.cleaning_mean}, {"cleaning_sd", s.cleaning_sd},
                  {"p_transport", s.p_transport},     {"p_cleaning", s.p_cleaning},
                  {"family", s.family == DurationFamily::exponential ? "exponential" : "lognormal"}};
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
  out << j.dump(1) << '\n';
}

}  // namespace ems
