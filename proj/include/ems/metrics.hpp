#pragma once

#include <span>
#include <vector>

namespace ems {

/// theta_c * t + M_ac cost model. Call and ambulance types are 0-based.
struct CostModel {
  std::vector<double> theta;         // per call type
  std::vector<double> m;             // [amb_type * n_call_types + call_type]
  std::vector<bool> high_priority;   // per call type
  int n_amb_types = 0;
  int n_call_types = 0;
  double target_high = 600.0;
  double target_low = 1200.0;

  /// Two ambulance types (ALS, BLS) and four call types; types 0 and 2 are
  /// high priority.
  static CostModel standard();

  double quality_cost(int amb_type, int call_type) const;
  /// Ambulance types sorted by ascending M_ac, ties to the lower type id.
  std::vector<int> preference(int call_type) const;
  void validate() const;
};

/// Throws ConfigError for an unknown (a, c) pair or negative t.
double allocation_cost(const CostModel& model, int amb_type, int call_type, double t);

double extra_response_time(const CostModel& model, int call_type, double t);

/// One served emergency.
struct EmergencyRecord {
  int call_id = 0;
  int etype = 0;
  double call_time = 0.0;
  int amb_id = 0;
  int amb_type = 0;
  double response_time = 0.0;
  double allocation_cost = 0.0;
  double finish_time = 0.0;
  double dispatch_time = 0.0;

  friend bool operator==(const EmergencyRecord&, const EmergencyRecord&) = default;
};

/// Nearest-rank quantile: the ceil(q * n)-th smallest value (q in (0, 1]).
double nearest_rank_quantile(std::vector<double> values, double q);

struct Summary {
  int n_scenarios = 0;  // scenarios with at least one record
  std::size_t n_records = 0;
  double mean_rt = 0.0;
  double q50_rt = 0.0;
  double q90_rt = 0.0;
  double mean_cost = 0.0;
  double q90_cost = 0.0;
  double mean_extra_high = 0.0;
  double mean_extra_low = 0.0;
  std::vector<double> mean_extra_by_type;
  std::vector<std::size_t> count_by_type;
};

/// Pooled statistics over every record of every scenario. Empty scenarios are
/// skipped. Sums run over sorted values, so the result does not depend on the
/// order of scenarios or records.
Summary summarize(std::span<const std::vector<EmergencyRecord>> scenarios, const CostModel& model);

}  // namespace ems
