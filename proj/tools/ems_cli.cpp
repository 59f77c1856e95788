#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ems/errors.hpp"
#include "ems/instances.hpp"
#include "ems/linalg.hpp"
#include "ems/policies.hpp"
#include "ems/report.hpp"
#include "ems/simulator.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kConfig = 3, kSolver = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string amb_setup = "rj";
  std::uint64_t instance_seed = 2024;
  int n_scenarios = 25;
  std::vector<int> nb_ambulances{6};
  int nb_bases = 0;  // 0: one base per ambulance, up to the station count
  std::vector<std::string> policies{"all"};
  std::uint64_t seed = 1;
  double gamma_scale = 1.0;
  double big_gamma = 1800.0;
  std::vector<int> caps{4, 4};
  std::string solver = "gmres";
  double busy_fraction = 0.4;
  double coverage_t = 600.0;
  double horizon = 86400.0;
  int mp_version = 2;
  int jobs = 1;
  bool log_decisions = false;
  std::string out = "results";
};

void add_instance_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Instance JSON file (overrides --amb_setup)");
  cmd->add_option("--amb_setup", o.amb_setup, "Built-in setup")->check(CLI::IsMember(ems::setup_names()));
  cmd->add_option("--instance-seed", o.instance_seed, "Seed of the built-in setup generator");
  cmd->add_option("--nb_bases", o.nb_bases, "Stations in use (max 34)")->check(CLI::Range(0, ems::kMaxBases));
  cmd->add_option("--caps", o.caps, "Per-type caps of the preparedness table")->delimiter(',');
  cmd->add_option("--solver", o.solver, "Stationary solver")->check(CLI::IsMember({"gmres", "cg"}));
  cmd->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Output directory");
}

ems::Setup load_setup(const Options& o) {
  return o.config.empty() ? ems::make_setup(o.amb_setup, o.instance_seed) : ems::load_setup_json(o.config);
}

int bases_for(const Options& o, const ems::Setup& s, int n_ambulances) {
  const int available = std::min<int>(ems::kMaxBases, static_cast<int>(s.city.stations.size()));
  return o.nb_bases > 0 ? o.nb_bases : std::min(n_ambulances, available);
}

/// Loads the table from the cache under `out/tables` or builds and stores it.
ems::PreparednessTable table_for(const Options& o, const ems::Setup& s, const ems::CityInstance& city, bool verbose) {
  const auto cost = ems::CostModel::standard();
  if (static_cast<int>(o.caps.size()) != cost.n_amb_types) {
    throw ems::ConfigError(fmt::format("--caps needs {} values", cost.n_amb_types));
  }
  const auto models = ems::derive_station_models(city, s.service, cost);
  const auto hash = ems::model_hash(models, o.caps);
  const fs::path dir = fs::path(o.out) / "tables";
  fs::create_directories(dir);
  const fs::path file = dir / fmt::format("table_{}_{}_{}.csv", s.name, city.stations.size(), fmt::join(o.caps, "-"));
  if (auto cached = ems::PreparednessTable::load_csv(file, hash)) {
    if (verbose) fmt::print("cache hit: {}\n", file.string());
    return *cached;
  }
  ems::TableBuildOptions opt;
  opt.caps = o.caps;
  opt.method = o.solver == "cg" ? ems::StationarySolver::cg : ems::StationarySolver::gmres;
  opt.jobs = o.jobs;
  ems::TableBuildStats stats;
  auto table = ems::build_preparedness_table(models, opt, &stats);
  table.save_csv(file, hash);
  if (verbose) {
    fmt::print("built {} systems for {} stations in {:.3f} s (largest state space {})\n", stats.systems,
               models.size(), stats.wall_seconds, stats.largest_state_space);
    fmt::print("fleet_size,solve_seconds\n");
    for (std::size_t k = 0; k < stats.seconds_by_fleet_size.size(); ++k) {
      fmt::print("{},{:.6f}\n", k, stats.seconds_by_fleet_size[k]);
    }
    fmt::print("wrote {}\n", file.string());
  }
  return table;
}

int cmd_build_table(const Options& o) {
  auto s = load_setup(o);
  ems::CityInstance city = s.city;
  ems::restrict_bases(city, o.nb_bases > 0 ? o.nb_bases : std::min<int>(ems::kMaxBases, city.stations.size()));
  table_for(o, s, city, true);
  return kOk;
}

std::vector<std::string> selected_policies(const Options& o) {
  const auto& known = ems::policy_names();
  if (o.policies.size() == 1 && o.policies[0] == "all") return known;
  for (const auto& p : o.policies) {
    if (std::find(known.begin(), known.end(), p) == known.end()) {
      throw UsageError(fmt::format("unknown policy '{}'; known: {}", p, fmt::join(known, ", ")));
    }
  }
  return o.policies;
}

int cmd_simulate(const Options& o) {
  const auto policies = selected_policies(o);
  auto s = load_setup(o);
  fs::create_directories(o.out);
  const auto cost = ems::CostModel::standard();
  for (int n : o.nb_ambulances) {
    if (n < 1) throw UsageError("--nb_ambulances values must be >= 1");
    ems::CityInstance city = s.city;
    ems::restrict_bases(city, bases_for(o, s, n));
    const int n_bases = static_cast<int>(city.stations.size());

    std::optional<ems::PreparednessTable> table;
    if (std::find(policies.begin(), policies.end(), "markov_preparedness") != policies.end()) {
      table = table_for(o, s, city, false);
    }
    ems::PolicyContext ctx;
    ctx.city = &city;
    ctx.cost = cost;
    ctx.table = table ? &*table : nullptr;
    ctx.params.big_gamma = o.big_gamma;
    ctx.params.gamma_scale = o.gamma_scale;
    ctx.params.mp_version = o.mp_version;
    ctx.params.busy_fraction = o.busy_fraction;
    ctx.params.coverage_threshold = o.coverage_t;
    ctx.params.p_no_transport = 1.0 - s.service.p_transport.front();
    ctx.derive_demand();

    ems::SimConfig cfg;
    cfg.horizon = o.horizon;
    cfg.service = s.service;
    cfg.cost = cost;
    cfg.log_decisions = o.log_decisions;
    cfg.placement = city.travel.mode() == ems::TravelProvider::Mode::matrix ? ems::CallPlacement::zone_centroid
                                                                           : ems::CallPlacement::uniform_in_zone;
    cfg.review_period = ctx.params.review_period;
    const auto fleet = ems::round_robin_fleet(n, cost.n_amb_types, n_bases);

    for (const auto& name : policies) {
      const auto policy = ems::make_policy(name, ctx);
      const auto t0 = std::chrono::steady_clock::now();
      const auto results = ems::run_replications(city, fleet, *policy, cfg, o.seed, o.n_scenarios, o.jobs);
      std::vector<std::vector<ems::EmergencyRecord>> records;
      for (const auto& r : results) records.push_back(r.records);
      const fs::path file = fs::path(o.out) / ems::result_file_name(s.name, name, n, o.n_scenarios);
      ems::write_atomic(file, ems::format_result_file(records));
      fs::path sidecar = file;
      sidecar += ems::kRecordsSuffix;
      ems::write_atomic(sidecar, ems::format_records_csv(records));
      if (o.log_decisions) {
        const fs::path logs = fs::path(o.out) / "logs";
        fs::create_directories(logs);
        for (std::size_t k = 0; k < results.size(); ++k) {
          ems::write_decision_log(logs / fmt::format("{}_{}_{}_scen{}.csv", s.name, name, n, k), results[k].log, name);
        }
      }
      const auto summary = ems::summarize(records, cost);
      fmt::print("{:<20} n={:<3} records={:<6} mean_cost={:10.2f} mean_rt={:8.2f} ({:.2f} s)\n", name, n,
                 summary.n_records, summary.mean_cost, summary.mean_rt,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  return kOk;
}

int cmd_report(const Options& o) {
  const auto rows = ems::collect_results(o.out, ems::CostModel::standard());
  if (rows.empty()) throw ems::ConfigError(fmt::format("no result sidecars found in {}", o.out));
  for (const auto& f : ems::write_report(o.out, rows)) fmt::print("wrote {}\n", f.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ambulance dispatch and relocation experiments"};
  app.require_subcommand(1);
  Options o;

  auto* build = app.add_subcommand("build-table", "Build or load the preparedness table and report timings");
  add_instance_options(build, o);

  auto* sim = app.add_subcommand("simulate", "Run policy x fleet-size sweeps and write result files");
  add_instance_options(sim, o);
  sim->add_option("--n_scenarios", o.n_scenarios, "Replications per policy and fleet size")->check(CLI::PositiveNumber);
  sim->add_option("--nb_ambulances", o.nb_ambulances, "Fleet sizes, comma separated")->delimiter(',');
  sim->add_option("--policies", o.policies, "Policy names, comma separated, or 'all'")->delimiter(',');
  sim->add_option("--seed", o.seed, "Base seed of the replications");
  sim->add_option("--gamma-scale", o.gamma_scale, "Multiplier of the queueing penalty")->check(CLI::NonNegativeNumber);
  sim->add_option("--Gamma", o.big_gamma, "Weight of the preparedness term")->check(CLI::NonNegativeNumber);
  sim->add_option("--busy-fraction", o.busy_fraction, "Busy fraction q of the coverage policy")
      ->check(CLI::Range(0.0, 1.0));
  sim->add_option("--coverage-T", o.coverage_t, "Coverage threshold in seconds")->check(CLI::PositiveNumber);
  sim->add_option("--horizon", o.horizon, "Seconds of calls per scenario")->check(CLI::PositiveNumber);
  sim->add_option("--mp-version", o.mp_version, "1 = nonlinear, 2 = linearized")->check(CLI::IsMember({1, 2}));
  sim->add_flag("--log-decisions", o.log_decisions, "Write per-scenario decision logs");

  auto* report = app.add_subcommand("report", "Summarize result sidecars into CSV tables");
  report->add_option("--out", o.out, "Directory holding the result files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) return cmd_build_table(o);
    if (*sim) return cmd_simulate(o);
    return cmd_report(o);
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kUsage;
  } catch (const ems::SolverError& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return kSolver;
  } catch (const ems::TableBuildError& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return kSolver;
  } catch (const ems::ModelingError& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return kSolver;
  } catch (const ems::SimulationFault& e) {
    fmt::print(stderr, "simulation fault: {}\n", e.what());
    return kSolver;
  } catch (const ems::Error& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kConfig;
  }
}
