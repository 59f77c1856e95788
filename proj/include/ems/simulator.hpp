#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ems/arrivals.hpp"
#include "ems/citymodel.hpp"
#include "ems/metrics.hpp"
#include "ems/policies.hpp"

namespace ems {

enum class DurationFamily { lognormal, exponential };

/// Service-stage durations (seconds) and branching probabilities, one entry
/// per emergency type.
struct ServiceParams {
  std::vector<double> on_scene_mean, on_scene_sd;
  std::vector<double> hospital_mean, hospital_sd;
  std::vector<double> cleaning_mean, cleaning_sd;
  std::vector<double> p_transport, p_cleaning;
  DurationFamily family = DurationFamily::lognormal;

  /// 600 s on scene, 900 s at hospital, 600 s cleaning, sd = mean / 2,
  /// transport 0.75, cleaning 0.3.
  static ServiceParams defaults(int n_types);
  void validate(int n_types) const;
  /// Mean busy time after arrival on scene, travel legs excluded.
  double mean_post_arrival(int etype) const;
};

/// Draws one duration with the given mean and sd. Lognormal parameters are
/// sigma^2 = ln(1 + sd^2/mean^2), mu = ln(mean) - sigma^2/2.
template <class Rng>
double sample_duration(DurationFamily family, double mean, double sd, Rng& rng);

struct AmbulanceSpec {
  int type = 0;
  int home_station = 0;
};

/// `n` ambulances alternating over `n_types` types, home stations assigned
/// round-robin over the first `n_stations` stations.
std::vector<AmbulanceSpec> round_robin_fleet(int n, int n_types, int n_stations);

struct SimConfig {
  double horizon = 86400.0;
  ServiceParams service = ServiceParams::defaults(4);
  CostModel cost = CostModel::standard();
  CallPlacement placement = CallPlacement::uniform_in_zone;
  double review_period = 60.0;
  /// Recount fleet vectors after every event.
  bool audit = false;
  bool log_decisions = false;
  /// Fault if service is still running this long after the horizon.
  double drain_limit = 30.0 * 86400.0;
};

struct DecisionLogEntry {
  double time = 0.0;
  std::string epoch;   // call, free, review
  std::string action;  // dispatch, reposition
  int amb = 0;
  int target = 0;      // call id or station index
  GeoPoint from;
  GeoPoint to;
  double travel = 0.0;
};

struct ScenarioResult {
  std::vector<EmergencyRecord> records;  // sorted by call id
  std::vector<DecisionLogEntry> log;
  std::size_t n_calls = 0;
  std::size_t n_events = 0;
  std::size_t n_free_epochs = 0;
  std::size_t max_queue = 0;
  double policy_seconds = 0.0;
};

/// Whether an ambulance in status `s` may be sent to a new call.
bool redirectable(AmbStatus s);

/// Simulates one scenario with calls sampled from the city's rates.
ScenarioResult run_scenario(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet,
                            const Policy& policy, const SimConfig& config, std::uint64_t seed);

/// Simulates a given call list; `seed` drives the service durations.
ScenarioResult run_calls(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet,
                         const Policy& policy, const SimConfig& config,
                         std::vector<EmergencyCall> calls, std::uint64_t seed);

/// Seed of replication `rep` derived from a base seed.
std::uint64_t replication_seed(std::uint64_t base, int rep);

/// Runs replications 0..n-1 on up to `jobs` threads; results in
/// replication order.
std::vector<ScenarioResult> run_replications(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet,
                                             const Policy& policy, const SimConfig& config,
                                             std::uint64_t base_seed, int n, int jobs = 1);

void write_decision_log(const std::filesystem::path& path, const std::vector<DecisionLogEntry>& log,
                        const std::string& policy);

}  // namespace ems
