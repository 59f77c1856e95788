#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ems/linalg.hpp"

namespace ems {

/// Ambulances of each type credited to one station (idle or en route to it).
struct FleetVector {
  std::vector<int> counts;

  FleetVector() = default;
  explicit FleetVector(std::vector<int> c) : counts(std::move(c)) {}
  static FleetVector zeros(int n_types) { return FleetVector(std::vector<int>(n_types, 0)); }

  int size() const { return static_cast<int>(counts.size()); }
  int operator[](int a) const { return counts[a]; }
  int& operator[](int a) { return counts[a]; }
  int total() const;
  /// Component-wise min with `caps`.
  FleetVector capped(std::span<const int> caps) const;

  friend bool operator==(const FleetVector&, const FleetVector&) = default;
  friend auto operator<=>(const FleetVector&, const FleetVector&) = default;
};

/// Single-station Markov model: arrival rates, service rates, compatible
/// ambulance types in preference order, and blocking penalties.
struct StationModel {
  int station_id = 0;
  int n_amb_types = 0;
  int n_call_types = 0;
  std::vector<double> lambda;             // per call type
  std::vector<double> mu;                 // [a * n_call_types + c]
  std::vector<std::vector<int>> compat;   // per call type, most preferred first
  std::vector<double> phi;                // per call type

  double service_rate(int a, int c) const { return mu[static_cast<std::size_t>(a) * n_call_types + c]; }
  /// Call types an ambulance type can serve, ascending.
  std::vector<int> served_by(int a) const;
  /// Throws ConfigError on a malformed model.
  void validate() const;
};

/// Busy counts x_{a,c}, aligned with StateSpace::pairs().
struct CtmcState {
  std::vector<int> busy;
  friend bool operator==(const CtmcState&, const CtmcState&) = default;
};

/// All states reachable for one (model, fleet) pair in lexicographic order of
/// the busy vector, with a perfect index map.
class StateSpace {
 public:
  StateSpace(const StationModel& model, const FleetVector& fleet);

  int size() const { return size_; }
  /// (ambulance type, call type) for each component of a state, grouped by
  /// ambulance type.
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
  const FleetVector& fleet() const { return fleet_; }

  CtmcState state(int index) const;
  /// Throws LookupError for a busy vector that is not a valid state.
  int index(const CtmcState& x) const;

  // Per ambulance type bookkeeping used by the generator builder.
  struct TypeBlock {
    int first_pair = 0;                   // offset into pairs()
    int width = 0;                        // |C(a)|
    int cap = 0;                          // m(a)
    long stride = 1;                      // global index multiplier
    std::vector<std::vector<int>> subs;   // sub-states in lex order
    std::vector<int> sub_busy;            // total busy per sub-state
    std::vector<long> sub_code;           // radix-(cap+1) code per sub-state
    std::vector<int> rank_of_code;        // -1 for invalid codes
    std::vector<long> pow;                // (cap+1)^j
  };
  const std::vector<TypeBlock>& blocks() const { return blocks_; }

 private:
  FleetVector fleet_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<TypeBlock> blocks_;
  int size_ = 1;
};

StateSpace enumerate_states(const StationModel& model, const FleetVector& fleet);

/// Most preferred type in compat[c] with an idle ambulance in state x, or
/// nullopt when every compatible type is exhausted.
std::optional<int> preferred_available_type(const StationModel& model, const FleetVector& fleet,
                                            const StateSpace& space, const CtmcState& x, int c);

SparseMatrix build_generator(const StationModel& model, const StateSpace& space);
SparseMatrix build_generator(const StationModel& model, const FleetVector& fleet);

enum class StationarySolver { gmres, cg };

/// Solves nu^T Q = 0, sum(nu) = 1 through the reduced matrix. Q is rescaled
/// by its largest exit rate first. Throws SolverError on non-convergence,
/// on entries below -1e-9, or when ||Q^T nu||_inf (scaled Q) exceeds 1e-8. The CG path
/// runs its normal-equation residual to tol * 1e-3.
std::vector<double> stationary_distribution(const SparseMatrix& q, StationarySolver method,
                                            double tol = 1e-10, SolveReport* report = nullptr);

/// Long-run penalty rate: sum over states of nu_x times the blocked arrival
/// rate lambda(c) * phi(c) of every call type with no compatible idle
/// ambulance.
double steady_state_cost(const StationModel& model, const StateSpace& space,
                         std::span<const double> nu);

/// psi-bar for every station and every fleet vector in prod_a {0..cap(a)}.
class PreparednessTable {
 public:
  PreparednessTable() = default;
  PreparednessTable(std::vector<int> station_ids, std::vector<int> caps);

  int n_stations() const { return static_cast<int>(station_ids_.size()); }
  const std::vector<int>& station_ids() const { return station_ids_; }
  const std::vector<int>& caps() const { return caps_; }
  std::size_t vectors_per_station() const { return per_station_; }
  std::size_t size() const { return values_.size(); }

  /// Value for `fleet` after capping each component at its cap.
  double lookup(int station_index, const FleetVector& fleet) const;
  void set(int station_index, const FleetVector& capped_fleet, double value);

  /// Enumerates prod_a {0..cap(a)} in lexicographic order.
  std::vector<FleetVector> all_vectors() const;

  void save_csv(const std::filesystem::path& path, const std::string& hash) const;
  /// nullopt if the file is missing or its hash line differs.
  static std::optional<PreparednessTable> load_csv(const std::filesystem::path& path,
                                                   const std::string& expected_hash);

 private:
  std::size_t offset(const FleetVector& capped) const;

  std::vector<int> station_ids_;
  std::vector<int> caps_;
  std::size_t per_station_ = 0;
  std::vector<double> values_;
};

struct TableBuildOptions {
  std::vector<int> caps;
  StationarySolver method = StationarySolver::gmres;
  double tol = 1e-10;
  int jobs = 1;
};

struct TableBuildStats {
  /// Wall seconds summed over every solve, keyed by total ambulances in the
  /// fleet vector (index = total).
  std::vector<double> seconds_by_fleet_size;
  double wall_seconds = 0.0;
  std::size_t systems = 0;
  std::size_t largest_state_space = 0;
};

/// Thrown when one (station, fleet) system fails; the build is aborted.
class TableBuildError : public Error {
 public:
  TableBuildError(const std::string& what, int station_id, FleetVector fleet)
      : Error(what), station_id_(station_id), fleet_(std::move(fleet)) {}
  int station_id() const { return station_id_; }
  const FleetVector& fleet() const { return fleet_; }

 private:
  int station_id_;
  FleetVector fleet_;
};

PreparednessTable build_preparedness_table(std::span<const StationModel> models,
                                           const TableBuildOptions& options,
                                           TableBuildStats* stats = nullptr);

/// Stable FNV-1a digest of every model parameter and the caps.
std::string model_hash(std::span<const StationModel> models, std::span<const int> caps);

}  // namespace ems
