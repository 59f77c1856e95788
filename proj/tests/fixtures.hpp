#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ems/citymodel.hpp"
#include "ems/policies.hpp"

namespace ems::testing {

inline constexpr double kKmPerDegree = 111.19492664455873;  // on the equator, R = 6371 km

/// Point on the equator `km` kilometres east of lon 0.
inline GeoPoint on_line(double km) { return {0.0, km / kKmPerDegree}; }

/// Great-circle travel at 60 km/h: 1 km = 60 s.
inline double line_seconds(double km) { return km * 60.0; }

/// Zones with centroids on the equator (no polygons), stations and
/// hospitals at the given kilometre marks, every zone with the same total
/// demand split evenly over four call types.
inline CityInstance line_city(const std::vector<double>& zone_km, const std::vector<double>& station_km,
                              const std::vector<double>& hospital_km, double zone_rate = 1e-4) {
  CityInstance c;
  for (std::size_t k = 0; k < zone_km.size(); ++k) {
    Zone z;
    z.id = static_cast<int>(k);
    z.centroid = on_line(zone_km[k]);
    c.zones.push_back(z);
  }
  for (std::size_t k = 0; k < station_km.size(); ++k) c.stations.push_back({static_cast<int>(k), on_line(station_km[k])});
  for (std::size_t k = 0; k < hospital_km.size(); ++k) {
    c.hospitals.push_back({static_cast<int>(k), on_line(hospital_km[k])});
  }
  c.rates = ArrivalRateTable(static_cast<int>(zone_km.size()), 4);
  for (int z = 0; z < static_cast<int>(zone_km.size()); ++z) {
    for (int t = 0; t < 4; ++t) c.rates.set_constant(z, t, zone_rate / 4.0);
  }
  c.travel = TravelProvider::great_circle(60.0);
  c.finalize();
  return c;
}

inline PolicyContext context_for(const CityInstance& city, const PreparednessTable* table = nullptr) {
  PolicyContext ctx;
  ctx.city = &city;
  ctx.table = table;
  ctx.derive_demand();
  return ctx;
}

/// Builds SystemState snapshots with consistent fleet vectors.
class StateBuilder {
 public:
  StateBuilder(int n_stations, double clock = 0.0) {
    state_.clock = clock;
    state_.fleets.assign(static_cast<std::size_t>(n_stations), FleetVector::zeros(2));
  }

  StateBuilder& idle(int type, int station, GeoPoint where, int home = -1, double busy_time = 0.0) {
    AmbulanceView a = base(type, where, home < 0 ? station : home);
    a.status = AmbStatus::at_station;
    a.station = station;
    a.busy_time = busy_time;
    ++state_.fleets[station][type];
    state_.ambulances.push_back(a);
    return *this;
  }

  StateBuilder& busy(int type, GeoPoint where, double release_time, GeoPoint release_where, int home = 0) {
    AmbulanceView a = base(type, where, home);
    a.status = AmbStatus::on_scene;
    a.emergency = 10'000 + static_cast<int>(state_.ambulances.size());
    a.release_time = release_time;
    a.release_location = release_where;
    state_.ambulances.push_back(a);
    return *this;
  }

  StateBuilder& released(int type, GeoPoint where, int home = 0) {
    AmbulanceView a = base(type, where, home);
    a.status = AmbStatus::released;
    state_.ambulances.push_back(a);
    return *this;
  }

  StateBuilder& queued(int id, double time, GeoPoint where, int etype, int zone = 0) {
    state_.queue.push_back({id, time, zone, where, etype});
    return *this;
  }

  SystemState build() const { return state_; }

 private:
  AmbulanceView base(int type, GeoPoint where, int home) {
    AmbulanceView a;
    a.id = static_cast<int>(state_.ambulances.size());
    a.type = type;
    a.home_station = home;
    a.location = where;
    a.release_time = state_.clock;
    a.release_location = where;
    return a;
  }

  SystemState state_;
};

inline EmergencyCall call_at(int id, double time, GeoPoint where, int etype, int zone = 0) {
  return {id, time, zone, where, etype};
}

}  // namespace ems::testing
