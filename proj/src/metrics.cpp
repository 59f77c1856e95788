#include "ems/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

CostModel CostModel::standard() {
  CostModel c;
  c.n_amb_types = 2;
  c.n_call_types = 4;
  c.theta = {4.0, 1.0, 4.0, 1.0};
  c.high_priority = {true, false, true, false};
  c.m = {0.0, 0.0, 1500.0, 1500.0,    // ALS
         6000.0, 6000.0, 0.0, 0.0};  // BLS
  return c;
}

void CostModel::validate() const {
  if (n_amb_types < 1 || n_call_types < 1) throw ConfigError("cost model needs at least one type");
  if (theta.size() != static_cast<std::size_t>(n_call_types) ||
      high_priority.size() != static_cast<std::size_t>(n_call_types) ||
      m.size() != static_cast<std::size_t>(n_amb_types) * n_call_types) {
    throw ConfigError("cost model has inconsistent sizes");
  }
  for (double t : theta) {
    if (!(t > 0.0)) throw ConfigError("theta must be positive");
  }
  for (double v : m) {
    if (!(v >= 0.0)) throw ConfigError("M_ac must be non-negative");
  }
}

double CostModel::quality_cost(int amb_type, int call_type) const {
  if (amb_type < 0 || amb_type >= n_amb_types || call_type < 0 || call_type >= n_call_types) {
    throw ConfigError(fmt::format("no cost for ambulance type {} and call type {}", amb_type, call_type));
  }
  return m[static_cast<std::size_t>(amb_type) * n_call_types + call_type];
}

std::vector<int> CostModel::preference(int call_type) const {
  std::vector<int> order(static_cast<std::size_t>(n_amb_types));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return quality_cost(a, call_type) < quality_cost(b, call_type);
  });
  return order;
}

double allocation_cost(const CostModel& model, int amb_type, int call_type, double t) {
  if (!(t >= 0.0)) throw ConfigError(fmt::format("response time must be >= 0, got {}", t));
  return model.theta[call_type] * t + model.quality_cost(amb_type, call_type);
}

double extra_response_time(const CostModel& model, int call_type, double t) {
  if (call_type < 0 || call_type >= model.n_call_types) throw ConfigError("unknown call type");
  const double target = model.high_priority[call_type] ? model.target_high : model.target_low;
  return std::max(0.0, t - target);
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

namespace {

double sorted_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Summary summarize(std::span<const std::vector<EmergencyRecord>> scenarios, const CostModel& model) {
  Summary out;
  std::vector<double> rt, cost, high, low;
  std::vector<std::vector<double>> by_type(static_cast<std::size_t>(model.n_call_types));
  for (const auto& sc : scenarios) {
    if (sc.empty()) continue;
    ++out.n_scenarios;
    for (const auto& r : sc) {
      rt.push_back(r.response_time);
      cost.push_back(r.allocation_cost);
      const double extra = extra_response_time(model, r.etype, r.response_time);
      (model.high_priority[r.etype] ? high : low).push_back(extra);
      by_type[r.etype].push_back(extra);
    }
  }
  out.n_records = rt.size();
  out.mean_rt = sorted_mean(rt);
  out.q50_rt = nearest_rank_quantile(rt, 0.5);
  out.q90_rt = nearest_rank_quantile(rt, 0.9);
  out.mean_cost = sorted_mean(cost);
  out.q90_cost = nearest_rank_quantile(cost, 0.9);
  out.mean_extra_high = sorted_mean(high);
  out.mean_extra_low = sorted_mean(low);
  for (auto& v : by_type) {
    out.count_by_type.push_back(v.size());
    out.mean_extra_by_type.push_back(sorted_mean(std::move(v)));
  }
  return out;
}

}  // namespace ems
