#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ems/arrivals.hpp"
#include "ems/assignment.hpp"
#include "ems/citymodel.hpp"
#include "ems/ctmc.hpp"
#include "ems/metrics.hpp"

namespace ems {

enum class AmbStatus {
  at_station,
  enroute_station,
  to_scene,
  on_scene,
  to_hospital,
  at_hospital,
  to_cleaning,
  cleaning,
  released,  // just finished a task and waiting for the reassignment decision
};

const char* to_string(AmbStatus s);

/// Whether an ambulance in this status may be sent to a call.
inline bool is_available(AmbStatus s) {
  return s == AmbStatus::at_station || s == AmbStatus::enroute_station;
}

struct AmbulanceView {
  int id = 0;  // equals the index in SystemState::ambulances
  int type = 0;
  AmbStatus status = AmbStatus::at_station;
  int station = -1;  // station index while at or en route to a station
  int home_station = 0;
  GeoPoint location;
  int emergency = -1;  // call being served, -1 when none
  double busy_time = 0.0;
  /// Expected time and place at which the current task ends. Equal to the
  /// clock and location for available ambulances.
  double release_time = 0.0;
  GeoPoint release_location;
};

struct SystemState {
  double clock = 0.0;
  std::vector<AmbulanceView> ambulances;
  std::vector<EmergencyCall> queue;  // by arrival time
  std::vector<FleetVector> fleets;   // per station, available ambulances

  bool available(int amb) const { return is_available(ambulances[amb].status); }
};

struct PolicyDecision {
  std::vector<std::pair<int, int>> dispatches;   // (ambulance id, call id)
  std::vector<std::pair<int, int>> repositions;  // (ambulance id, station index)
};

/// Parameters shared by the policy suite.
struct PolicyParams {
  // Markov preparedness
  double big_gamma = 1800.0;
  double gamma_wait = 1800.0;   // W in gamma(i) = theta_c (W + 2 * elapsed wait)
  double gamma_scale = 1.0;
  int mp_version = 2;
  long leaf_budget = 1'000'000;
  // Jagtenberg
  double busy_fraction = 0.4;
  double coverage_threshold = 600.0;
  // Lee 2017 and Carvalho
  double t_max = 7200.0;
  double p_no_transport = 0.25;
  // Carvalho
  double prep_weight = 1800.0;
  double unserved_penalty = 1e7;
  long carvalho_leaf_budget = 100'000;
  // Queue-review period when calls are waiting
  double review_period = 60.0;
};

/// Read-only data every policy may use.
struct PolicyContext {
  const CityInstance* city = nullptr;
  CostModel cost = CostModel::standard();
  PolicyParams params;
  const PreparednessTable* table = nullptr;  // Markov preparedness only
  /// Weekly-average demand per zone, all types together.
  std::vector<double> zone_demand;
  /// Weekly-average demand per zone and preferred ambulance type.
  std::vector<std::vector<double>> zone_type_demand;

  /// Fills the demand vectors from the city's rate table.
  void derive_demand();
  double travel(GeoPoint a, GeoPoint b) const { return city->travel_time(a, b); }
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Selection epoch: `call` has just arrived and is not in state.queue.
  virtual PolicyDecision on_call(const SystemState& state, const EmergencyCall& call) const = 0;
  /// Reassignment epoch: `amb` is released and must be given one action.
  virtual PolicyDecision on_free(const SystemState& state, int amb) const = 0;
  /// Periodic epoch while calls wait in queue. Defaults to no action.
  virtual PolicyDecision on_review(const SystemState&) const { return {}; }
};

/// Registry names, in reporting order.
const std::vector<std::string>& policy_names();
/// Throws ConfigError for an unknown name or a missing table.
std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx);

// Zone preparedness with gamma^a = 1 and a 1 s travel floor.

struct ZonePreparedness {
  std::vector<double> psi;  // per zone, NaN for zones with no demand
};

/// psi_l = (1/lambda_l) sum_a 1/max(1, t_l^a) over `ambulances` (their
/// current locations).
ZonePreparedness zone_preparedness(const PolicyContext& ctx, const std::vector<GeoPoint>& ambulances);

/// Minimum over scored zones; +inf when no zone has demand.
double min_preparedness(const ZonePreparedness& z);

enum class CentralityMeasure { weighted_degree, distance, betweenness };

/// Centrality of each call in `queue` with respect to the others.
std::vector<double> centrality(const PolicyContext& ctx, const std::vector<EmergencyCall>& queue,
                               CentralityMeasure measure);

/// MEXCLP marginal lambda (1 - q) q^(k-1).
double mexclp_marginal(double lambda, double q, int k);

/// Builds the Markov preparedness dispatch problem at a decision epoch.
/// `new_call` (i0) may be null. Available ambulances become station rows;
/// every other ambulance, including a released one, is an on-task row.
DispatchProblem build_mp_problem(const PolicyContext& ctx, const SystemState& state,
                                 const EmergencyCall* new_call);

}  // namespace ems
