#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ems/errors.hpp"
#include "ems/policies.hpp"
#include "ems/simulator.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ems;
using namespace ems::testing;

namespace {

bool dispatched(const PolicyDecision& d, int amb, int call) {
  return std::find(d.dispatches.begin(), d.dispatches.end(), std::pair{amb, call}) != d.dispatches.end();
}

/// 1 zone, 3 registered points with hand-set travel times.
CityInstance matrix_city(double zone_rate) {
  std::vector<std::pair<std::string, GeoPoint>> locs{
      {"z0", {0.0, 0.0}}, {"s0", {0.0, 1.0}}, {"h0", {0.0, 2.0}}};
  CityInstance c;
  c.travel = TravelProvider::from_matrix(locs, {0, 1, 2, 1, 0, 1, 2, 1, 0});
  Zone z;
  z.centroid = {0.0, 0.0};
  c.zones = {z};
  c.stations = {{0, {0.0, 1.0}}};
  c.hospitals = {{0, {0.0, 2.0}}};
  c.rates = ArrivalRateTable(1, 4);
  for (int t = 0; t < 4; ++t) c.rates.set_constant(0, t, zone_rate / 4.0);
  c.finalize();
  return c;
}

/// psi-bar = scale / (1 + m0 + m1) at every station, `steep` multiplying
/// station 1.
PreparednessTable simple_table(int n_stations, double scale = 0.5, double steep = 1.0) {
  std::vector<int> ids;
  for (int s = 0; s < n_stations; ++s) ids.push_back(s);
  PreparednessTable t(ids, {3, 3});
  for (int s = 0; s < n_stations; ++s) {
    for (const auto& m : t.all_vectors()) t.set(s, m, (s == 1 ? steep : 1.0) * scale / (1.0 + m.total()));
  }
  return t;
}

double min_psi_without(const PolicyContext& ctx, const SystemState& s, int skip) {
  std::vector<GeoPoint> where;
  for (const auto& a : s.ambulances) {
    if (a.id != skip && is_available(a.status)) where.push_back(a.location);
  }
  return min_preparedness(zone_preparedness(ctx, where));
}

}  // namespace

TEST_CASE("zone preparedness: direct evaluation, empty fleet and homogeneity") {
  auto city = matrix_city(1.0);
  auto ctx = context_for(city);
  CHECK(ctx.zone_demand[0] == doctest::Approx(1.0).epsilon(1e-12));
  auto z = zone_preparedness(ctx, {{0.0, 1.0}, {0.0, 2.0}});
  CHECK(z.psi[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(zone_preparedness(ctx, {}).psi[0] == 0.0);

  auto city2 = matrix_city(2.0);
  auto ctx2 = context_for(city2);
  CHECK(zone_preparedness(ctx2, {{0.0, 1.0}, {0.0, 2.0}}).psi[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("zone preparedness: co-located ambulance uses the 1 s floor and zero-demand zones are skipped") {
  auto city = line_city({0.0, 10.0}, {0.0}, {5.0});
  city.rates.set_constant(1, 0, 0.0);
  city.rates.set_constant(1, 1, 0.0);
  city.rates.set_constant(1, 2, 0.0);
  city.rates.set_constant(1, 3, 0.0);
  auto ctx = context_for(city);
  auto z = zone_preparedness(ctx, {on_line(0.0)});
  CHECK(z.psi[0] == doctest::Approx(1.0 / 1e-4));
  CHECK(std::isnan(z.psi[1]));
  CHECK(min_preparedness(z) == doctest::Approx(1.0 / 1e-4));
}

TEST_CASE("zone preparedness: removing never increases, adding never decreases (property)") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> km(0.0, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> zones;
    for (int k = 0; k < 6; ++k) zones.push_back(km(rng));
    auto city = line_city(zones, {km(rng)}, {km(rng)});
    auto ctx = context_for(city);
    std::vector<GeoPoint> ambs;
    for (int k = 0; k < 4; ++k) ambs.push_back(on_line(km(rng)));
    const auto full = zone_preparedness(ctx, ambs);
    for (std::size_t drop = 0; drop < ambs.size(); ++drop) {
      auto fewer = ambs;
      fewer.erase(fewer.begin() + static_cast<long>(drop));
      const auto z = zone_preparedness(ctx, fewer);
      for (std::size_t l = 0; l < zones.size(); ++l) CHECK(z.psi[l] <= full.psi[l]);
    }
    auto more = ambs;
    more.push_back(on_line(km(rng)));
    const auto z = zone_preparedness(ctx, more);
    for (std::size_t l = 0; l < zones.size(); ++l) CHECK(z.psi[l] >= full.psi[l]);
  }
}

TEST_CASE("closest available") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  auto ca = make_policy("dummy_queue", ctx);

  SUBCASE("single idle ambulance is dispatched") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).build();
    CHECK(dispatched(ca->on_call(s, call_at(1, 0, on_line(3), 1)), 0, 1));
  }
  SUBCASE("no idle ambulance queues the call") {
    auto s = StateBuilder(2).busy(0, on_line(0), 100, on_line(0)).build();
    const auto d = ca->on_call(s, call_at(1, 0, on_line(3), 1));
    CHECK(d.dispatches.empty());
    CHECK(d.repositions.empty());
  }
  SUBCASE("nearer of two idle ambulances wins") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).idle(0, 1, on_line(10)).build();
    CHECK(dispatched(ca->on_call(s, call_at(1, 0, on_line(7), 1)), 1, 1));
    CHECK(dispatched(ca->on_call(s, call_at(2, 0, on_line(4), 1)), 0, 2));
  }
  SUBCASE("free ambulance serves the oldest queued call, else the closest station") {
    auto s = StateBuilder(2, 50).released(0, on_line(8)).queued(7, 2, on_line(9), 1).queued(8, 5, on_line(1), 1).build();
    CHECK(dispatched(ca->on_free(s, 0), 0, 7));
    auto empty = StateBuilder(2, 50).released(0, on_line(8)).build();
    const auto d = ca->on_free(empty, 0);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0] == std::pair{0, 1});
  }
}

TEST_CASE("Andersson preparedness") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  auto pol = make_policy("preparedness", ctx);

  SUBCASE("single idle ambulance is forced") {
    auto s = StateBuilder(2).idle(1, 1, on_line(10)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(0), 0)), 0, 1));
  }
  SUBCASE("selection matches enumeration of removals") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).idle(0, 0, on_line(2)).idle(0, 1, on_line(10)).build();
    int best = -1;
    double best_v = -1.0;
    for (int a = 0; a < 3; ++a) {
      const double v = min_psi_without(ctx, s, a);
      if (v > best_v) {
        best_v = v;
        best = a;
      }
    }
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(5), 1)), best, 1));
    CHECK(best != 2);
  }
  SUBCASE("all stations tie: the closest is chosen") {
    auto flat = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0}, 0.0);
    auto fctx = context_for(flat);
    auto p = make_policy("preparedness", fctx);
    auto s = StateBuilder(2).released(0, on_line(7)).build();
    const auto d = p->on_free(s, 0);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0].second == 1);
  }
  SUBCASE("reassignment raises the weakest zone") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).released(0, on_line(1)).build();
    const auto d = pol->on_free(s, 1);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0].second == 1);
  }
}

TEST_CASE("Lee 2011 ratio rule") {
  SUBCASE("equal preparedness: the closer ambulance wins") {
    auto city = line_city({5.0}, {3.0, 7.0}, {5.0});
    auto ctx = context_for(city);
    auto pol = make_policy("prep2", ctx);
    auto s = StateBuilder(2).idle(0, 0, on_line(3)).idle(0, 1, on_line(7)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(6), 1)), 1, 1));
  }
  SUBCASE("equal distances: higher remaining preparedness wins") {
    auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
    auto ctx = context_for(city);
    auto pol = make_policy("prep2", ctx);
    auto s = StateBuilder(2).idle(0, 0, on_line(4)).idle(0, 1, on_line(6)).idle(0, 0, on_line(0)).build();
    CHECK(min_psi_without(ctx, s, 0) > min_psi_without(ctx, s, 1));
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(5), 1)), 0, 1));
  }
  SUBCASE("three ambulances against direct enumeration") {
    auto city = line_city({0.0, 6.0, 13.0}, {0.0, 10.0}, {5.0});
    auto ctx = context_for(city);
    auto pol = make_policy("prep2", ctx);
    auto s = StateBuilder(2).idle(0, 0, on_line(1)).idle(1, 1, on_line(9)).idle(0, 1, on_line(12)).build();
    const GeoPoint where = on_line(8);
    int best = -1;
    double best_v = -1.0;
    for (int a = 0; a < 3; ++a) {
      const double v = min_psi_without(ctx, s, a) / std::max(1.0, city.travel_time(s.ambulances[a].location, where));
      if (v > best_v) {
        best_v = v;
        best = a;
      }
    }
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, where, 1)), best, 1));
  }
  SUBCASE("free ambulance takes the closest queued call") {
    auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
    auto ctx = context_for(city);
    auto pol = make_policy("prep2", ctx);
    auto s = StateBuilder(2, 50).released(0, on_line(8)).queued(7, 2, on_line(0), 1).queued(8, 5, on_line(9), 1).build();
    CHECK(dispatched(pol->on_free(s, 0), 0, 8));
  }
}

TEST_CASE("centrality measures") {
  auto city = line_city({0.0}, {0.0}, {0.0});
  auto ctx = context_for(city);
  const std::vector<EmergencyCall> one{call_at(1, 0, on_line(0), 0)};
  CHECK(centrality(ctx, one, CentralityMeasure::weighted_degree)[0] == 0.0);
  CHECK(centrality(ctx, one, CentralityMeasure::distance)[0] == 1.0);
  CHECK(centrality(ctx, one, CentralityMeasure::betweenness)[0] == 0.0);

  const std::vector<EmergencyCall> two{call_at(1, 0, on_line(0), 0), call_at(2, 0, on_line(1.0 / 60.0), 0)};
  const auto wd = centrality(ctx, two, CentralityMeasure::weighted_degree);
  CHECK(wd[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(wd[1] == doctest::Approx(0.5).epsilon(1e-6));

  // Matrix-defined triangle and path.
  std::vector<std::pair<std::string, GeoPoint>> locs{{"z0", {0, 0}}, {"s0", {0, 1}}, {"h0", {0, 2}}};
  CityInstance tri;
  tri.travel = TravelProvider::from_matrix(locs, {0, 100, 100, 100, 0, 100, 100, 100, 0});
  PolicyContext tctx;
  tctx.city = &tri;
  const std::vector<EmergencyCall> three{call_at(1, 0, {0, 0}, 0), call_at(2, 0, {0, 1}, 0), call_at(3, 0, {0, 2}, 0)};
  for (auto m : {CentralityMeasure::weighted_degree, CentralityMeasure::distance, CentralityMeasure::betweenness}) {
    const auto c = centrality(tctx, three, m);
    CHECK(c[0] == c[1]);
    CHECK(c[1] == c[2]);
  }
  CityInstance path;
  path.travel = TravelProvider::from_matrix(locs, {0, 100, 300, 100, 0, 100, 300, 100, 0});
  tctx.city = &path;
  const auto b = centrality(tctx, three, CentralityMeasure::betweenness);
  CHECK(b[0] == 0.0);
  CHECK(b[1] == 2.0);
  CHECK(b[2] == 0.0);
}

TEST_CASE("Lee 2014 assignment") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  auto pol = make_policy("centrality", ctx);

  SUBCASE("one available ambulance and one call") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(4), 1)), 0, 1));
  }
  SUBCASE("a busy ambulance matched to the call is postponed") {
    auto s = StateBuilder(2, 100).idle(0, 1, on_line(40)).busy(0, on_line(3), 110, on_line(3)).build();
    const auto d = pol->on_call(s, call_at(1, 100, on_line(3), 1));
    CHECK(d.dispatches.empty());
    CHECK(d.repositions.empty());
  }
  SUBCASE("3 x 3 against enumeration") {
    auto s = StateBuilder(2, 0)
                 .idle(0, 0, on_line(0))
                 .idle(1, 0, on_line(3))
                 .idle(0, 1, on_line(11))
                 .queued(1, 0, on_line(1), 1)
                 .queued(2, 0, on_line(2), 0)
                 .build();
    const auto call = call_at(3, 0, on_line(12), 3);
    auto all = s.queue;
    all.push_back(call);
    const auto c = centrality(ctx, all, CentralityMeasure::distance);
    std::vector<int> perm{0, 1, 2};
    double best = -1.0;
    std::vector<int> best_perm;
    do {
      double w = 0.0;
      for (int e = 0; e < 3; ++e) {
        w += c[e] / (1.0 + city.travel_time(s.ambulances[perm[e]].location, all[e].location));
      }
      if (w > best) {
        best = w;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto d = pol->on_call(s, call);
    REQUIRE(d.dispatches.size() == 3);
    for (int e = 0; e < 3; ++e) CHECK(dispatched(d, best_perm[e], all[e].id));
  }
  SUBCASE("free ambulance with an empty queue goes to the closest station") {
    auto s = StateBuilder(2).released(0, on_line(8)).build();
    const auto d = pol->on_free(s, 0);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0].second == 1);
  }
}

TEST_CASE("Lee 2017 weighted response") {
  SUBCASE("single idle ambulance is forced") {
    auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
    auto ctx = context_for(city);
    auto s = StateBuilder(2).idle(0, 1, on_line(10)).build();
    CHECK(dispatched(make_policy("dist_centrality", ctx)->on_call(s, call_at(1, 0, on_line(0), 0)), 0, 1));
  }
  SUBCASE("identical zone impact: the closer ambulance wins") {
    auto city = line_city({5.0}, {3.0, 7.0}, {5.0});
    auto ctx = context_for(city);
    auto s = StateBuilder(2).idle(0, 0, on_line(3)).idle(0, 1, on_line(7)).build();
    CHECK(dispatched(make_policy("dist_centrality", ctx)->on_call(s, call_at(1, 0, on_line(6), 1)), 1, 1));
  }
  SUBCASE("two zones against direct evaluation") {
    auto city = line_city({0.0, 20.0}, {0.0, 20.0}, {5.0});
    auto ctx = context_for(city);
    auto s = StateBuilder(2).idle(0, 0, on_line(2)).idle(0, 1, on_line(6)).idle(1, 1, on_line(19)).build();
    const GeoPoint where = on_line(5);
    int best = -1;
    double best_v = 1e300;
    for (int a = 0; a < 3; ++a) {
      double sum = 0.0;
      for (std::size_t l = 0; l < 2; ++l) {
        double m = 7200.0;
        for (int b = 0; b < 3; ++b) {
          if (b != a) m = std::min(m, city.travel_time(s.ambulances[b].location, city.zones[l].centroid));
        }
        sum += ctx.zone_demand[l] * (1.0 + m);
      }
      const double v = (1.0 + city.travel_time(s.ambulances[a].location, where)) * sum;
      if (v < best_v) {
        best_v = v;
        best = a;
      }
    }
    CHECK(dispatched(make_policy("dist_centrality", ctx)->on_call(s, call_at(1, 0, where, 1)), best, 1));
  }
  SUBCASE("free ambulance with queued calls uses weighted-degree centrality") {
    auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
    auto ctx = context_for(city);
    ctx.params.p_no_transport = 1.0;
    // Calls 2 and 3 sit together; call 1 is alone but slightly closer.
    auto s = StateBuilder(2, 10)
                 .released(0, on_line(5))
                 .queued(1, 0, on_line(4), 1)
                 .queued(2, 1, on_line(6.5), 1)
                 .queued(3, 2, on_line(6.6), 1)
                 .build();
    const auto d = make_policy("dist_centrality", ctx)->on_free(s, 0);
    REQUIRE(d.dispatches.size() == 1);
    CHECK(d.dispatches[0].second != 1);
  }
}

TEST_CASE("Mayorga districts") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  auto pol = make_policy("district", ctx);

  SUBCASE("district partition covers every zone exactly once") {
    auto grid = line_city({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {0.5, 4.5, 8.0}, {5.0});
    std::vector<int> hits(grid.zones.size(), 0);
    for (std::size_t b = 0; b < grid.stations.size(); ++b) {
      for (std::size_t z = 0; z < grid.zones.size(); ++z) {
        if (grid.station_zone_map[z] == static_cast<int>(b)) ++hits[z];
      }
    }
    for (int h : hits) CHECK(h == 1);
  }
  SUBCASE("in-district ambulance beats a closer outsider") {
    auto s = StateBuilder(2).idle(0, 0, on_line(4), 0).idle(0, 1, on_line(6), 1).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(5.5), 0, 0)), 0, 1));
  }
  SUBCASE("empty district falls back to the cross-district order") {
    auto s = StateBuilder(2).idle(0, 1, on_line(10), 1, 900).idle(0, 1, on_line(12), 1, 100).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(1), 1, 0)), 1, 1));
    CHECK(dispatched(pol->on_call(s, call_at(2, 0, on_line(1), 0, 0)), 0, 2));
  }
  SUBCASE("free ambulance returns home when nothing waits") {
    auto s = StateBuilder(2).released(0, on_line(1), 1).build();
    const auto d = pol->on_free(s, 0);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0].second == 1);
  }
}

TEST_CASE("Bandara ordering") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  auto pol = make_policy("ordered", ctx);
  SUBCASE("high priority: closest") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).idle(0, 1, on_line(10)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(8), 0)), 1, 1));
  }
  SUBCASE("low priority, fresh scenario: lowest id") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).idle(0, 1, on_line(10)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(8), 1)), 0, 1));
  }
  SUBCASE("low priority after unequal workloads: least busy") {
    auto s = StateBuilder(2)
                 .idle(0, 0, on_line(0), 0, 500)
                 .idle(0, 1, on_line(10), 1, 100)
                 .idle(1, 0, on_line(1), 0, 300)
                 .build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(0), 3)), 1, 1));
  }
}

TEST_CASE("Jagtenberg coverage") {
  CHECK(mexclp_marginal(2.0, 0.5, 2) == doctest::Approx(0.5));
  CHECK(mexclp_marginal(2.0, 0.5, 0) == 0.0);

  auto city = line_city({0.0, 10.0, 50.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  auto pol = make_policy("coverage", ctx);
  SUBCASE("uncovered call zone: the ambulance covering nothing is taken") {
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).idle(0, 1, on_line(105)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(50), 1, 2)), 1, 1));
  }
  SUBCASE("covered call zone restricts the choice to its coverers") {
    auto s = StateBuilder(2).idle(0, 0, on_line(1)).idle(0, 1, on_line(105)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(0), 1, 0)), 0, 1));
  }
  SUBCASE("smaller coverage loss wins among coverers") {
    // Ambulance 0 is closer but also the only one covering zone 1.
    auto s = StateBuilder(2).idle(0, 0, on_line(3)).idle(0, 0, on_line(-4)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(0), 1, 0)), 1, 1));
  }
}

TEST_CASE("Carvalho batch assignment") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  auto ctx = context_for(city);
  SUBCASE("nothing waiting and nobody free: no-op") {
    auto pol = make_policy("tipat", ctx);
    auto s = StateBuilder(2).busy(0, on_line(0), 100, on_line(0)).build();
    CHECK(pol->on_review(s).dispatches.empty());
    CHECK(pol->on_call(s, call_at(1, 0, on_line(3), 1)).dispatches.empty());
  }
  SUBCASE("below threshold with no coverage term: closest") {
    ctx.params.prep_weight = 0.0;
    auto pol = make_policy("tipat", ctx);
    auto s = StateBuilder(2).idle(0, 0, on_line(5)).idle(0, 0, on_line(2)).build();
    CHECK(dispatched(pol->on_call(s, call_at(1, 0, on_line(0), 1)), 1, 1));
  }
  SUBCASE("2 x 2 batch against enumeration") {
    auto s = StateBuilder(2, 100)
                 .idle(0, 0, on_line(0))
                 .idle(1, 1, on_line(10))
                 .queued(1, 0, on_line(9), 0)
                 .build();
    const auto call = call_at(2, 100, on_line(30), 1, 1);
    auto all = s.queue;
    all.push_back(call);
    auto coverage = [&](const std::vector<int>& left) {
      double total = 0.0;
      for (std::size_t l = 0; l < city.zones.size(); ++l) {
        for (int ty = 0; ty < 2; ++ty) {
          double m = 7200.0;
          for (int a : left) {
            if (s.ambulances[a].type == ty) m = std::min(m, city.travel_time(s.ambulances[a].location, city.zones[l].centroid));
          }
          total += ctx.zone_type_demand[ty][l] * m;
        }
      }
      return 1800.0 * total;
    };
    double best = 1e300;
    std::pair<int, int> best_pair;
    for (int p : {0, 1}) {
      const int q = 1 - p;
      double v = 0.0;
      for (auto [a, e] : {std::pair{p, 0}, std::pair{q, 1}}) {
        const double t = city.travel_time(s.ambulances[a].location, all[e].location);
        v += extra_response_time(ctx.cost, all[e].etype, (100.0 - all[e].time) + t) + 1e-6 * t;
      }
      v += coverage({});
      if (v < best) {
        best = v;
        best_pair = {p, q};
      }
    }
    const auto d = make_policy("tipat", ctx)->on_call(s, call);
    REQUIRE(d.dispatches.size() == 2);
    CHECK(dispatched(d, best_pair.first, 1));
    CHECK(dispatched(d, best_pair.second, 2));
  }
}

TEST_CASE("Markov preparedness selection") {
  auto city = line_city({0.0, 10.0}, {0.0, 10.0}, {5.0});
  const auto table = simple_table(2);
  auto ctx = context_for(city, &table);

  SUBCASE("idle ALS at the call's station takes a high-priority ALS call") {
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(2).idle(0, 0, on_line(0)).build();
    const auto call = call_at(1, 0, on_line(0), 0);
    const auto p = build_mp_problem(ctx, s, &call);
    const double best = enumerate_min(p, [&](const DispatchDecision& d) { return linear_objective(p, d); });
    const auto d = pol->on_call(s, call);
    CHECK(dispatched(d, 0, 1));
    DispatchDecision as_x;
    as_x.x = {{0, 1}};
    CHECK(linear_objective(p, as_x) == doctest::Approx(best));
  }
  SUBCASE("on-task ambulances with huge release times and a small gamma: queue") {
    ctx.params.gamma_scale = 0.01;
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(2).busy(0, on_line(0), 1e6, on_line(0)).busy(1, on_line(10), 1e6, on_line(10)).build();
    CHECK(pol->on_call(s, call_at(1, 0, on_line(3), 1)).dispatches.empty());
  }
  SUBCASE("Gamma = 0 and huge gamma: min-cost immediate assignment") {
    ctx.params.big_gamma = 0.0;
    ctx.params.gamma_scale = 1e6;
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(2, 30)
                 .idle(0, 0, on_line(0))
                 .idle(1, 0, on_line(1))
                 .idle(1, 1, on_line(10))
                 .queued(5, 10, on_line(9), 0)
                 .queued(6, 20, on_line(2), 3)
                 .build();
    const auto call = call_at(7, 30, on_line(6), 1);
    const auto d = pol->on_call(s, call);
    REQUIRE(d.dispatches.size() == 3);
    auto all = s.queue;
    all.push_back(call);
    auto r = [&](int a, const EmergencyCall& c) {
      const auto& amb = s.ambulances[a];
      return allocation_cost(ctx.cost, amb.type, c.etype, city.travel_time(amb.location, c.location) + (30 - c.time));
    };
    std::vector<int> perm{0, 1, 2};
    double best = 1e300;
    do {
      double v = 0;
      for (int e = 0; e < 3; ++e) v += r(perm[e], all[e]);
      best = std::min(best, v);
    } while (std::next_permutation(perm.begin(), perm.end()));
    double got = 0;
    for (auto [a, id] : d.dispatches) {
      got += r(a, *std::find_if(all.begin(), all.end(), [&](const auto& c) { return c.id == id; }));
    }
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("Markov preparedness reassignment") {
  auto city = line_city({0.0, 10.0, 20.0}, {0.0, 10.0, 20.0}, {5.0});

  SUBCASE("empty queue: station with the best s+ improvement") {
    std::vector<int> ids{0, 1, 2};
    PreparednessTable table(ids, {3, 3});
    for (int b = 0; b < 3; ++b) {
      for (const auto& m : table.all_vectors()) table.set(b, m, (1.0 + b) * 0.3 / (1.0 + m.total()));
    }
    auto ctx = context_for(city, &table);
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(3).idle(0, 2, on_line(20)).released(1, on_line(3)).build();
    int best = -1;
    double best_v = 1e300;
    for (int b = 0; b < 3; ++b) {
      FleetVector up = s.fleets[b];
      ++up[1];
      const double v = table.lookup(b, up) - table.lookup(b, s.fleets[b]);
      if (v < best_v) {
        best_v = v;
        best = b;
      }
    }
    const auto d = pol->on_free(s, 1);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0] == std::pair{1, best});
  }
  SUBCASE("cheap queued call is served") {
    const auto table = simple_table(3);
    auto ctx = context_for(city, &table);
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(3, 100).released(0, on_line(3)).queued(4, 90, on_line(3.5), 0).build();
    CHECK(dispatched(pol->on_free(s, 0), 0, 4));
  }
  SUBCASE("equal s+ everywhere: lowest station index") {
    const auto table = simple_table(3);
    auto ctx = context_for(city, &table);
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(3).released(0, on_line(19)).build();
    const auto d = pol->on_free(s, 0);
    REQUIRE(d.repositions.size() == 1);
    CHECK(d.repositions[0].second == 0);
  }
  SUBCASE("version 1 agrees with enumeration of the nonlinear program") {
    const auto table = simple_table(3, 0.5, 3.0);
    auto ctx = context_for(city, &table);
    ctx.params.mp_version = 1;
    auto pol = make_policy("markov_preparedness", ctx);
    auto s = StateBuilder(3, 50).idle(0, 0, on_line(0)).idle(1, 1, on_line(10)).released(0, on_line(12))
                 .queued(3, 10, on_line(15), 1).build();
    const auto p = build_mp_problem(ctx, s, nullptr);
    const double best = enumerate_min(p, [&](const DispatchDecision& d) { return nonlinear_objective(p, d, table); });
    CHECK(solve_nonlinear(p, table).objective == doctest::Approx(best));
    const auto d = pol->on_free(s, 2);
    CHECK(d.dispatches.size() + d.repositions.size() >= 1);
  }
}

TEST_CASE("MP with Gamma = 0 and huge gamma reduces to min-cost assignment at every epoch") {
  auto city = line_city({0.0, 4.0, 8.0, 12.0}, {0.0, 12.0}, {6.0}, 4e-4);
  const auto table = simple_table(2);
  auto ctx = context_for(city, &table);
  ctx.params.big_gamma = 0.0;
  ctx.params.gamma_scale = 1e6;

  // Checks each selection decision against an exhaustive search of the
  // immediate-cost problem, then forwards it.
  struct Checker : Policy {
    const Policy& inner;
    const PolicyContext& ctx;
    int epochs = 0;
    Checker(const Policy& p, const PolicyContext& c) : inner(p), ctx(c) {}
    std::string name() const override { return inner.name(); }
    PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
      auto p = build_mp_problem(ctx, s, &call);
      const double best = enumerate_min(p, [&](const DispatchDecision& d) { return linear_objective(p, d); });
      const auto d = solve_linear(p);
      CHECK(d.objective == doctest::Approx(best).epsilon(1e-12));
      ++const_cast<Checker*>(this)->epochs;
      return inner.on_call(s, call);
    }
    PolicyDecision on_free(const SystemState& s, int amb) const override { return inner.on_free(s, amb); }
    PolicyDecision on_review(const SystemState& s) const override { return inner.on_review(s); }
  };
  auto mp = make_policy("markov_preparedness", ctx);
  Checker checker(*mp, ctx);
  SimConfig cfg;
  cfg.horizon = 3.0 * 86400.0;
  cfg.placement = CallPlacement::zone_centroid;
  const auto fleet = round_robin_fleet(3, 2, 2);
  const auto res = run_scenario(city, fleet, checker, cfg, 5);
  CHECK(res.n_calls >= 100);
  CHECK(checker.epochs == static_cast<int>(res.n_calls));
}

TEST_CASE("registry") {
  auto city = line_city({0.0}, {0.0}, {0.0});
  auto ctx = context_for(city);
  CHECK(policy_names().size() == 10);
  CHECK_THROWS_AS(make_policy("nope", ctx), ConfigError);
  CHECK_THROWS_AS(make_policy("markov_preparedness", ctx), ConfigError);
  for (const auto& n : policy_names()) {
    if (n == "markov_preparedness") continue;
    CHECK(make_policy(n, ctx)->name() == n);
  }
  const auto wrong = simple_table(3);
  ctx.table = &wrong;
  CHECK_THROWS_AS(make_policy("markov_preparedness", ctx), ConfigError);
}
