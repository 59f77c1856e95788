#include <doctest.h>

#include <algorithm>
#include <random>

#include "ems/errors.hpp"
#include "ems/metrics.hpp"

using ems::CostModel;
using ems::EmergencyRecord;

TEST_CASE("allocation cost follows Table 1") {
  auto m = CostModel::standard();
  CHECK(ems::allocation_cost(m, 0, 0, 100.0) == 400.0);
  CHECK(ems::allocation_cost(m, 1, 0, 100.0) == 6400.0);
  CHECK(ems::allocation_cost(m, 0, 3, 0.0) == 1500.0);
  CHECK(ems::allocation_cost(m, 1, 2, 10.0) == 40.0);
  CHECK(ems::allocation_cost(m, 1, 3, 10.0) == 10.0);
  CHECK_THROWS_AS(ems::allocation_cost(m, 2, 0, 1.0), ems::ConfigError);
  CHECK_THROWS_AS(ems::allocation_cost(m, 0, 4, 1.0), ems::ConfigError);
  CHECK_THROWS_AS(ems::allocation_cost(m, 0, 0, -1.0), ems::ConfigError);
}

TEST_CASE("allocation cost is strictly increasing in time") {
  auto m = CostModel::standard();
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) {
      for (double t = 0.0; t < 5000.0; t += 97.0) {
        CHECK(ems::allocation_cost(m, a, c, t) < ems::allocation_cost(m, a, c, t + 1e-3));
      }
    }
  }
}

TEST_CASE("preferences derive from M_ac") {
  auto m = CostModel::standard();
  CHECK(m.preference(0) == std::vector<int>{0, 1});
  CHECK(m.preference(1) == std::vector<int>{0, 1});
  CHECK(m.preference(2) == std::vector<int>{1, 0});
  CHECK(m.preference(3) == std::vector<int>{1, 0});
  auto tie = m;
  tie.m = {5, 5, 5, 5, 5, 5, 5, 5};
  CHECK(tie.preference(2) == std::vector<int>{0, 1});
}

TEST_CASE("extra response time") {
  auto m = CostModel::standard();
  CHECK(ems::extra_response_time(m, 0, 600.0) == 0.0);
  CHECK(ems::extra_response_time(m, 0, 700.0) == 100.0);
  CHECK(ems::extra_response_time(m, 1, 1100.0) == 0.0);
  CHECK(ems::extra_response_time(m, 3, 1500.0) == 300.0);
}

TEST_CASE("nearest-rank quantiles") {
  CHECK(ems::nearest_rank_quantile({5.0}, 0.9) == 5.0);
  std::vector<double> v{40, 10, 30, 20};
  CHECK(ems::nearest_rank_quantile(v, 0.25) == 10);
  CHECK(ems::nearest_rank_quantile(v, 0.5) == 20);
  CHECK(ems::nearest_rank_quantile(v, 0.9) == 40);
  CHECK(ems::nearest_rank_quantile(v, 0.75) == 30);
  CHECK(ems::nearest_rank_quantile(v, 1.0) == 40);
}

TEST_CASE("summary pools scenarios and skips empty ones") {
  auto m = CostModel::standard();
  std::vector<std::vector<EmergencyRecord>> sc(3);
  sc[0].push_back({0, 0, 0.0, 1, 0, 700.0, 2800.0, 2000.0});
  sc[2].push_back({0, 1, 0.0, 2, 1, 1300.0, 7300.0, 4000.0});
  sc[2].push_back({1, 2, 0.0, 2, 1, 100.0, 400.0, 4000.0});
  auto s = ems::summarize(sc, m);
  CHECK(s.n_scenarios == 2);
  CHECK(s.n_records == 3);
  CHECK(s.mean_rt == doctest::Approx(700.0));
  CHECK(s.q90_rt == 1300.0);
  CHECK(s.mean_cost == doctest::Approx(3500.0));
  CHECK(s.mean_extra_high == doctest::Approx(50.0));
  CHECK(s.mean_extra_low == doctest::Approx(100.0));
  CHECK(s.count_by_type == std::vector<std::size_t>{1, 1, 1, 0});

  std::vector<std::vector<EmergencyRecord>> single{{{0, 0, 0.0, 1, 0, 42.0, 168.0, 50.0}}};
  CHECK(ems::summarize(single, m).mean_rt == 42.0);
}

TEST_CASE("summary is invariant under scenario reordering") {
  auto m = CostModel::standard();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3000.0);
  std::uniform_int_distribution<int> t(0, 3);
  std::vector<std::vector<EmergencyRecord>> sc(25);
  for (auto& s : sc) {
    for (int k = 0; k < 40; ++k) {
      const double rt = u(rng);
      const int c = t(rng);
      s.push_back({k, c, 0.0, 1, 0, rt, ems::allocation_cost(m, 0, c, rt), rt + 100});
    }
  }
  auto a = ems::summarize(sc, m);
  std::shuffle(sc.begin(), sc.end(), rng);
  for (auto& s : sc) std::reverse(s.begin(), s.end());
  auto b = ems::summarize(sc, m);
  CHECK(a.mean_rt == b.mean_rt);
  CHECK(a.mean_cost == b.mean_cost);
  CHECK(a.q90_rt == b.q90_rt);
  CHECK(a.mean_extra_high == b.mean_extra_high);
}
