#pragma once

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "ems/ctmc.hpp"

namespace ems {

/// Marks an (ambulance, emergency) pair that may not be matched.
inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

/// An ambulance at, or en route to, a station. It may stay put.
struct StationAmbulance {
  int id = 0;
  int type = 0;
  int station = 0;  // station index
};

/// An on-task (or newly freed) ambulance. It must be given exactly one
/// action: an emergency or a permitted station.
struct OnTaskAmbulance {
  int id = 0;
  int type = 0;
  /// nullopt means every station is permitted.
  std::optional<std::vector<int>> permitted_stations;
};

/// Decision-epoch snapshot for the selection and reassignment programs.
/// Ambulance rows are `station_ambs` followed by `on_task`.
struct DispatchProblem {
  int n_amb_types = 0;
  int n_stations = 0;
  std::vector<StationAmbulance> station_ambs;
  std::vector<OnTaskAmbulance> on_task;
  std::vector<int> emergencies;  // emergency ids
  std::vector<double> cost;      // r(a, i), row-major, kForbidden = no arc
  std::vector<double> gamma;     // queueing penalty per emergency
  std::vector<double> s_minus;   // [type * n_stations + b]
  std::vector<double> s_plus;    // [type * n_stations + b]
  double big_gamma = 0.0;
  /// Current supply m_b per station; needed by the nonlinear program only.
  std::vector<FleetVector> fleets;

  int n_ambs() const { return static_cast<int>(station_ambs.size() + on_task.size()); }
  int n_emergencies() const { return static_cast<int>(emergencies.size()); }
  double r(int amb_row, int e) const { return cost[static_cast<std::size_t>(amb_row) * emergencies.size() + e]; }
  double& r(int amb_row, int e) { return cost[static_cast<std::size_t>(amb_row) * emergencies.size() + e]; }
  int amb_id(int amb_row) const;
  int amb_type(int amb_row) const;
  bool is_on_task(int amb_row) const { return amb_row >= static_cast<int>(station_ambs.size()); }
  bool station_permitted(int amb_row, int b) const;

  /// Fills s_minus/s_plus from a table at the current `fleets`. A removal
  /// from an empty component yields +inf (never chosen).
  void set_marginals(const PreparednessTable& table);

  /// Throws ModelingError on size mismatches or an on-task ambulance with no
  /// permitted station.
  void validate() const;
};

struct DispatchDecision {
  std::vector<std::pair<int, int>> x;  // (ambulance id, emergency id)
  std::vector<std::pair<int, int>> y;  // (ambulance id, station index)
  double objective = 0.0;
};

double linear_objective(const DispatchProblem& p, const DispatchDecision& d);
double nonlinear_objective(const DispatchProblem& p, const DispatchDecision& d,
                           const PreparednessTable& table);

/// Post-decision supply m+_b(x, y) for every station.
std::vector<FleetVector> post_decision_fleets(const DispatchProblem& p, const DispatchDecision& d);

/// Throws ModelingError unless every ambulance and emergency appears at most
/// once in x, every on-task ambulance appears exactly once in x or y, and only
/// permitted, finite-cost pairs are used.
void validate_decision(const DispatchProblem& p, const DispatchDecision& d);

/// Exact optimum of the linearized program, solved as a min-cost flow:
/// every emergency has an outside option of cost gamma(i), every station
/// ambulance a free no-op, and every on-task ambulance its cheapest station.
DispatchDecision solve_linear(const DispatchProblem& p);

/// Exact optimum of the nonlinear program with psi-bar looked up at the
/// capped post-decision fleets. Depth-first enumeration; throws
/// BudgetExceededError after `leaf_budget` complete decisions.
DispatchDecision solve_nonlinear(const DispatchProblem& p, const PreparednessTable& table,
                                 long leaf_budget = 1'000'000);

}  // namespace ems
