#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "ems/assignment.hpp"
#include "ems/errors.hpp"
#include "oracles.hpp"

using ems::DispatchProblem;

namespace {

DispatchProblem single(double r, double gamma) {
  DispatchProblem p;
  p.n_amb_types = 1;
  p.n_stations = 1;
  p.station_ambs = {{1, 0, 0}};
  p.emergencies = {10};
  p.cost = {r};
  p.gamma = {gamma};
  p.s_minus = {0.0};
  p.s_plus = {0.0};
  p.fleets = {ems::FleetVector({1})};
  return p;
}

ems::PreparednessTable random_table(std::mt19937_64& rng, int n_stations, int n_types, int cap) {
  std::vector<int> ids, caps(static_cast<std::size_t>(n_types), cap);
  for (int s = 0; s < n_stations; ++s) ids.push_back(s);
  ems::PreparednessTable t(ids, caps);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < n_stations; ++s) {
    for (const auto& m : t.all_vectors()) t.set(s, m, u(rng) / (1.0 + m.total()));
  }
  return t;
}

}  // namespace

TEST_CASE("dominant penalty dispatches, dominant cost queues") {
  auto d = ems::solve_linear(single(100.0, 1e6));
  REQUIRE(d.x.size() == 1);
  CHECK(d.x[0] == std::pair{1, 10});
  CHECK(d.objective == 100.0);
  auto q = ems::solve_linear(single(100.0, 10.0));
  CHECK(q.x.empty());
  CHECK(q.objective == 10.0);
}

TEST_CASE("forbidden pairs are never used") {
  auto p = single(ems::kForbidden, 1e6);
  auto d = ems::solve_linear(p);
  CHECK(d.x.empty());
  CHECK(d.objective == 1e6);
}

TEST_CASE("on-task ambulance without a permitted station is a modeling error") {
  auto p = single(100.0, 10.0);
  p.on_task.push_back({2, 0, std::vector<int>{}});
  p.cost.push_back(50.0);
  CHECK_THROWS_AS(ems::solve_linear(p), ems::ModelingError);
}

TEST_CASE("on-task ambulance goes to its cheapest permitted station") {
  DispatchProblem p;
  p.n_amb_types = 1;
  p.n_stations = 3;
  p.on_task = {{4, 0, std::nullopt}};
  p.s_minus = {0, 0, 0};
  p.s_plus = {-1.0, -3.0, -3.0};
  p.big_gamma = 10.0;
  p.fleets.assign(3, ems::FleetVector({0}));
  auto d = ems::solve_linear(p);
  REQUIRE(d.y.size() == 1);
  CHECK(d.y[0] == std::pair{4, 1});
  CHECK(d.objective == -30.0);
}

TEST_CASE("solve_linear equals exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto p = ems::testing::random_problem(rng, 6, 4, 3);
    auto d = ems::solve_linear(p);
    CHECK_NOTHROW(ems::validate_decision(p, d));
    const double brute = ems::testing::enumerate_min(p, [&](const auto& dd) { return ems::linear_objective(p, dd); });
    CHECK(std::abs(d.objective - brute) <= 1e-9 * std::max(1.0, std::abs(brute)));
  }
}

TEST_CASE("solve_nonlinear equals exhaustive enumeration and matches linear at zero weight") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto p = ems::testing::random_problem(rng, 5, 3, 3);
    auto table = random_table(rng, p.n_stations, 2, 3);
    auto d = ems::solve_nonlinear(p, table);
    CHECK_NOTHROW(ems::validate_decision(p, d));
    const double brute =
        ems::testing::enumerate_min(p, [&](const auto& dd) { return ems::nonlinear_objective(p, dd, table); });
    CHECK(std::abs(d.objective - brute) <= 1e-9 * std::max(1.0, std::abs(brute)));
    CHECK(d.objective == doctest::Approx(ems::nonlinear_objective(p, d, table)));

    p.big_gamma = 0.0;
    const double v1 = ems::solve_nonlinear(p, table).objective;
    const double v2 = ems::solve_linear(p).objective;
    CHECK(std::abs(v1 - v2) <= 1e-9 * std::max(1.0, std::abs(v2)));
  }
}

TEST_CASE("single idle ambulance with no queue keeps still") {
  auto p = single(100.0, 10.0);
  p.emergencies.clear();
  p.cost.clear();
  p.gamma.clear();
  p.big_gamma = 1800.0;
  ems::PreparednessTable t({0}, {2});
  for (const auto& m : t.all_vectors()) t.set(0, m, 0.01 * (3 - m.total()));
  auto d = ems::solve_nonlinear(p, t);
  CHECK(d.x.empty());
  CHECK(d.y.empty());
  CHECK(d.objective == doctest::Approx(1800.0 * 0.02));
}

TEST_CASE("nonlinear search enforces its leaf budget") {
  std::mt19937_64 rng(1);
  auto p = ems::testing::random_problem(rng, 6, 4, 3);
  while (p.n_ambs() < 4) p = ems::testing::random_problem(rng, 6, 4, 3);
  auto table = random_table(rng, p.n_stations, 2, 3);
  CHECK_THROWS_AS(ems::solve_nonlinear(p, table, 1), ems::BudgetExceededError);
}

TEST_CASE("set_marginals differences table values") {
  ems::PreparednessTable t({0, 1}, {2, 2});
  for (int s = 0; s < 2; ++s) {
    for (const auto& m : t.all_vectors()) t.set(s, m, 10.0 * s + 3.0 * m[0] + 1.0 * m[1]);
  }
  DispatchProblem p;
  p.n_amb_types = 2;
  p.n_stations = 2;
  p.fleets = {ems::FleetVector({1, 0}), ems::FleetVector({2, 1})};
  p.set_marginals(t);
  CHECK(p.s_plus[0 * 2 + 0] == 3.0);
  CHECK(p.s_minus[0 * 2 + 0] == -3.0);
  CHECK(p.s_plus[1 * 2 + 0] == 1.0);
  CHECK(p.s_plus[0 * 2 + 1] == 0.0);  // capped at 2
  CHECK(p.s_minus[1 * 2 + 1] == -1.0);
}

TEST_CASE("scaling costs leaves the decision unchanged") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = ems::testing::random_problem(rng, 6, 4, 3);
    auto base = ems::solve_linear(p);
    for (double k : {0.25, 2.0, 8.0}) {
      auto s = p;
      for (auto& v : s.cost) v *= k;
      for (auto& v : s.gamma) v *= k;
      s.big_gamma *= k;
      auto d = ems::solve_linear(s);
      CHECK(d.x == base.x);
      CHECK(d.y == base.y);
    }
  }
}

TEST_CASE("solve_linear latency at 16 ambulances, 10 emergencies, 16 stations") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DispatchProblem p;
  p.n_amb_types = 2;
  p.n_stations = 16;
  for (int k = 0; k < 16; ++k) {
    if (k % 3 == 0) p.on_task.push_back({k, k % 2, std::nullopt});
    else p.station_ambs.push_back({k, k % 2, k});
  }
  for (int e = 0; e < 10; ++e) p.emergencies.push_back(e);
  for (int k = 0; k < 16 * 10; ++k) p.cost.push_back(200 + 4000 * u(rng));
  for (int e = 0; e < 10; ++e) p.gamma.push_back(7200.0);
  for (int k = 0; k < 32; ++k) {
    p.s_minus.push_back(u(rng));
    p.s_plus.push_back(-u(rng));
  }
  p.big_gamma = 1800.0;
  p.fleets.assign(16, ems::FleetVector({0, 0}));
  const auto t0 = std::chrono::steady_clock::now();
  for (int rep = 0; rep < 20; ++rep) ems::solve_linear(p);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / 20;
  CHECK(ms <= 50.0);
}
