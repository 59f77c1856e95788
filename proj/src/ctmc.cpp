#include "ems/ctmc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

int FleetVector::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

FleetVector FleetVector::capped(std::span<const int> caps) const {
  FleetVector out = *this;
  for (std::size_t a = 0; a < out.counts.size() && a < caps.size(); ++a) {
    out.counts[a] = std::min(out.counts[a], caps[a]);
  }
  return out;
}

std::vector<int> StationModel::served_by(int a) const {
  std::vector<int> out;
  for (int c = 0; c < n_call_types; ++c) {
    if (std::find(compat[c].begin(), compat[c].end(), a) != compat[c].end()) out.push_back(c);
  }
  return out;
}

void StationModel::validate() const {
  if (n_amb_types < 1 || n_call_types < 1) throw ConfigError("station model needs >= 1 type");
  const auto nc = static_cast<std::size_t>(n_call_types);
  if (lambda.size() != nc || phi.size() != nc || compat.size() != nc ||
      mu.size() != nc * static_cast<std::size_t>(n_amb_types)) {
    throw ConfigError(fmt::format("station {} model has inconsistent sizes", station_id));
  }
  for (int c = 0; c < n_call_types; ++c) {
    if (!(lambda[c] >= 0.0) || !std::isfinite(lambda[c])) throw ConfigError("lambda must be >= 0");
    if (!(phi[c] >= 0.0) || !std::isfinite(phi[c])) throw ConfigError("phi must be >= 0");
    if (compat[c].empty()) {
      throw ConfigError(fmt::format("call type {} has no compatible ambulance type", c));
    }
    std::set<int> seen;
    for (int a : compat[c]) {
      if (a < 0 || a >= n_amb_types) throw ConfigError("compat lists an unknown ambulance type");
      if (!seen.insert(a).second) throw ConfigError("duplicate type in a preference list");
      if (!(service_rate(a, c) > 0.0) || !std::isfinite(service_rate(a, c))) {
        throw ConfigError(fmt::format("service rate mu({}, {}) must be positive", a, c));
      }
    }
  }
}

namespace {

void enumerate_subs(int width, int cap, std::vector<int>& cur, int pos, int used,
                    std::vector<std::vector<int>>& out) {
  if (pos == width) {
    out.push_back(cur);
    return;
  }
  for (int v = 0; v + used <= cap; ++v) {
    cur[pos] = v;
    enumerate_subs(width, cap, cur, pos + 1, used + v, out);
  }
  cur[pos] = 0;
}

}  // namespace

StateSpace::StateSpace(const StationModel& model, const FleetVector& fleet) : fleet_(fleet) {
  model.validate();
  if (fleet.size() != model.n_amb_types) throw DimensionError("fleet vector size mismatch");
  for (int a = 0; a < model.n_amb_types; ++a) {
    if (fleet[a] < 0) throw DimensionError("negative fleet count");
  }
  blocks_.resize(static_cast<std::size_t>(model.n_amb_types));
  for (int a = 0; a < model.n_amb_types; ++a) {
    auto& blk = blocks_[a];
    const auto served = model.served_by(a);
    blk.first_pair = static_cast<int>(pairs_.size());
    blk.width = static_cast<int>(served.size());
    blk.cap = fleet[a];
    for (int c : served) pairs_.emplace_back(a, c);
    std::vector<int> cur(served.size(), 0);
    enumerate_subs(blk.width, blk.cap, cur, 0, 0, blk.subs);
    blk.pow.assign(static_cast<std::size_t>(blk.width) + 1, 1);
    for (int j = 1; j <= blk.width; ++j) blk.pow[j] = blk.pow[j - 1] * (blk.cap + 1);
    blk.rank_of_code.assign(static_cast<std::size_t>(blk.pow[blk.width]), -1);
    for (std::size_t r = 0; r < blk.subs.size(); ++r) {
      long code = 0;
      int busy = 0;
      for (int j = 0; j < blk.width; ++j) {
        code += blk.subs[r][j] * blk.pow[j];
        busy += blk.subs[r][j];
      }
      blk.sub_code.push_back(code);
      blk.sub_busy.push_back(busy);
      blk.rank_of_code[code] = static_cast<int>(r);
    }
  }
  long stride = 1;
  for (int a = model.n_amb_types - 1; a >= 0; --a) {
    blocks_[a].stride = stride;
    stride *= static_cast<long>(blocks_[a].subs.size());
  }
  if (stride > std::numeric_limits<int>::max()) throw DimensionError("state space too large");
  size_ = static_cast<int>(stride);
}

CtmcState StateSpace::state(int index) const {
  if (index < 0 || index >= size_) throw LookupError("state index out of range");
  CtmcState x;
  x.busy.assign(pairs_.size(), 0);
  for (const auto& blk : blocks_) {
    const auto rank = static_cast<std::size_t>((index / blk.stride) % static_cast<long>(blk.subs.size()));
    for (int j = 0; j < blk.width; ++j) x.busy[blk.first_pair + j] = blk.subs[rank][j];
  }
  return x;
}

int StateSpace::index(const CtmcState& x) const {
  if (x.busy.size() != pairs_.size()) throw LookupError("state has the wrong number of components");
  long idx = 0;
  for (const auto& blk : blocks_) {
    long code = 0;
    int busy = 0;
    for (int j = 0; j < blk.width; ++j) {
      const int v = x.busy[blk.first_pair + j];
      if (v < 0) throw LookupError("negative busy count");
      busy += v;
      code += v * blk.pow[j];
    }
    if (busy > blk.cap) throw LookupError("busy count exceeds fleet");
    idx += blk.rank_of_code[code] * blk.stride;
  }
  return static_cast<int>(idx);
}

StateSpace enumerate_states(const StationModel& model, const FleetVector& fleet) {
  return StateSpace(model, fleet);
}

std::optional<int> preferred_available_type(const StationModel& model, const FleetVector& fleet,
                                            const StateSpace& space, const CtmcState& x, int c) {
  for (int a : model.compat[c]) {
    const auto& blk = space.blocks()[a];
    int busy = 0;
    for (int j = 0; j < blk.width; ++j) busy += x.busy[blk.first_pair + j];
    if (fleet[a] > busy) return a;
  }
  return std::nullopt;
}

SparseMatrix build_generator(const StationModel& model, const StateSpace& space) {
  const int n = space.size();
  const auto& blocks = space.blocks();
  const int na = model.n_amb_types;
  const int nc = model.n_call_types;

  // Position of call type c inside each ambulance type's block (-1 if a
  // cannot serve c).
  std::vector<int> pos(static_cast<std::size_t>(na) * nc, -1);
  for (int a = 0; a < na; ++a) {
    const auto& blk = blocks[a];
    for (int j = 0; j < blk.width; ++j) pos[a * nc + space.pairs()[blk.first_pair + j].second] = j;
  }

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(n) * (space.pairs().size() + nc + 1));
  std::vector<std::size_t> rank(static_cast<std::size_t>(na));
  std::vector<int> idle(static_cast<std::size_t>(na));
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < na; ++a) {
      const auto& blk = blocks[a];
      rank[a] = static_cast<std::size_t>((i / blk.stride) % static_cast<long>(blk.subs.size()));
      idle[a] = blk.cap - blk.sub_busy[rank[a]];
    }
    double out = 0.0;
    for (int c = 0; c < nc; ++c) {
      if (model.lambda[c] <= 0.0) continue;
      for (int a : model.compat[c]) {
        if (idle[a] <= 0) continue;
        const auto& blk = blocks[a];
        const long code = blk.sub_code[rank[a]] + blk.pow[pos[a * nc + c]];
        const int nr = blk.rank_of_code[code];
        const long j = i + (nr - static_cast<long>(rank[a])) * blk.stride;
        t.push_back({i, static_cast<int>(j), model.lambda[c]});
        out += model.lambda[c];
        break;
      }
    }
    for (int a = 0; a < na; ++a) {
      const auto& blk = blocks[a];
      const auto& sub = blk.subs[rank[a]];
      for (int jj = 0; jj < blk.width; ++jj) {
        if (sub[jj] == 0) continue;
        const int c = space.pairs()[blk.first_pair + jj].second;
        const double rate = model.service_rate(a, c) * sub[jj];
        const long code = blk.sub_code[rank[a]] - blk.pow[jj];
        const int nr = blk.rank_of_code[code];
        const long j = i + (nr - static_cast<long>(rank[a])) * blk.stride;
        t.push_back({i, static_cast<int>(j), rate});
        out += rate;
      }
    }
    t.push_back({i, i, -out});
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

SparseMatrix build_generator(const StationModel& model, const FleetVector& fleet) {
  return build_generator(model, StateSpace(model, fleet));
}

std::vector<double> stationary_distribution(const SparseMatrix& q, StationarySolver method,
                                            double tol, SolveReport* report_out) {
  const int n = q.n_rows();
  if (n != q.n_cols()) throw DimensionError("generator must be square");
  if (n == 1) {
    if (report_out) *report_out = SolveReport{0, 0.0, true, false};
    return {1.0};
  }
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(q.at(i, i)));
  if (scale == 0.0) throw SolverError("generator has no transitions", SolveReport{});
  const SparseMatrix qs = q.scaled(1.0 / scale);
  const SparseMatrix d = build_reduced_matrix(qs, 0);

  std::vector<double> nu;
  SolveReport report;
  if (method == StationarySolver::gmres) {
    std::vector<double> e1(static_cast<std::size_t>(n), 0.0);
    e1[0] = 1.0;
    std::tie(nu, report) = gmres_solve(d.transposed(), e1, tol, 20 * n, 50);
  } else {
    // CG runs on the normal equations with a residual target of tol * 1e-3.
    std::tie(nu, report) = cg_normal_solve(d, tol * 1e-3, 10 * n);
  }
  if (report_out) *report_out = report;
  if (!report.converged) {
    throw SolverError(fmt::format("stationary solve did not converge after {} iterations "
                                  "(residual {:.3e})",
                                  report.iterations, report.residual_norm),
                      report);
  }
  double sum = 0.0;
  for (double& v : nu) {
    if (v < -1e-9) {
      throw SolverError(fmt::format("stationary vector has a negative entry {:.3e}", v), report);
    }
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  for (double& v : nu) v /= sum;

  std::vector<double> res(static_cast<std::size_t>(n));
  qs.multiply_transposed(nu, res);
  double worst = 0.0;
  for (double r : res) worst = std::max(worst, std::abs(r));
  if (worst > 1e-8) {
    throw SolverError(fmt::format("balance residual {:.3e} exceeds 1e-8", worst), report);
  }
  return nu;
}

double steady_state_cost(const StationModel& model, const StateSpace& space,
                         std::span<const double> nu) {
  if (static_cast<int>(nu.size()) != space.size()) throw DimensionError("nu size mismatch");
  const auto& blocks = space.blocks();
  const int na = model.n_amb_types;
  std::vector<int> idle(static_cast<std::size_t>(na));
  double total = 0.0;
  for (int i = 0; i < space.size(); ++i) {
    if (nu[i] == 0.0) continue;
    for (int a = 0; a < na; ++a) {
      const auto& blk = blocks[a];
      const auto rank = static_cast<std::size_t>((i / blk.stride) % static_cast<long>(blk.subs.size()));
      idle[a] = blk.cap - blk.sub_busy[rank];
    }
    double rate = 0.0;
    for (int c = 0; c < model.n_call_types; ++c) {
      bool blocked = true;
      for (int a : model.compat[c]) blocked = blocked && idle[a] == 0;
      if (blocked) rate += model.lambda[c] * model.phi[c];
    }
    total += nu[i] * rate;
  }
  return total;
}

PreparednessTable::PreparednessTable(std::vector<int> station_ids, std::vector<int> caps)
    : station_ids_(std::move(station_ids)), caps_(std::move(caps)) {
  per_station_ = 1;
  for (int c : caps_) {
    if (c < 0) throw ConfigError("caps must be >= 0");
    per_station_ *= static_cast<std::size_t>(c) + 1;
  }
  values_.assign(per_station_ * station_ids_.size(), std::numeric_limits<double>::quiet_NaN());
}

std::size_t PreparednessTable::offset(const FleetVector& capped) const {
  if (capped.size() != static_cast<int>(caps_.size())) throw LookupError("fleet vector size mismatch");
  std::size_t off = 0;
  for (std::size_t a = 0; a < caps_.size(); ++a) {
    const int v = capped.counts[a];
    if (v < 0 || v > caps_[a]) throw LookupError("fleet component outside the table");
    off = off * (static_cast<std::size_t>(caps_[a]) + 1) + static_cast<std::size_t>(v);
  }
  return off;
}

double PreparednessTable::lookup(int station_index, const FleetVector& fleet) const {
  if (station_index < 0 || station_index >= n_stations()) throw LookupError("station index out of range");
  return values_[station_index * per_station_ + offset(fleet.capped(caps_))];
}

void PreparednessTable::set(int station_index, const FleetVector& capped_fleet, double value) {
  if (station_index < 0 || station_index >= n_stations()) throw LookupError("station index out of range");
  values_[station_index * per_station_ + offset(capped_fleet)] = value;
}

std::vector<FleetVector> PreparednessTable::all_vectors() const {
  std::vector<FleetVector> out;
  out.reserve(per_station_);
  FleetVector cur = FleetVector::zeros(static_cast<int>(caps_.size()));
  for (std::size_t k = 0; k < per_station_; ++k) {
    out.push_back(cur);
    for (int a = static_cast<int>(caps_.size()) - 1; a >= 0; --a) {
      if (cur[a] < caps_[a]) {
        ++cur[a];
        break;
      }
      cur[a] = 0;
    }
  }
  return out;
}

void PreparednessTable::save_csv(const std::filesystem::path& path, const std::string& hash) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError(fmt::format("cannot write table cache {}", path.string()));
    out << "# hash=" << hash << " caps=";
    for (std::size_t a = 0; a < caps_.size(); ++a) out << (a ? "," : "") << caps_[a];
    out << "\nstation_id";
    for (std::size_t a = 0; a < caps_.size(); ++a) out << ",m_a" << (a + 1);
    out << ",psi_bar\n";
    const auto vecs = all_vectors();
    for (int s = 0; s < n_stations(); ++s) {
      for (const auto& m : vecs) {
        out << station_ids_[s];
        for (int v : m.counts) out << ',' << v;
        out << fmt::format(",{:.17g}\n", lookup(s, m));
      }
    }
  }
  std::filesystem::rename(tmp, path);
}

std::optional<PreparednessTable> PreparednessTable::load_csv(const std::filesystem::path& path,
                                                             const std::string& expected_hash) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  const std::string prefix = "# hash=" + expected_hash + " caps=";
  if (line.rfind(prefix, 0) != 0) return std::nullopt;
  std::vector<int> caps;
  {
    std::stringstream ss(line.substr(prefix.size()));
    std::string tok;
    while (std::getline(ss, tok, ',')) caps.push_back(std::stoi(tok));
  }
  if (!std::getline(in, line)) return std::nullopt;  // column header
  std::vector<int> ids;
  std::vector<std::pair<FleetVector, double>> rows;
  std::vector<int> row_station;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int sid = 0;
    ss >> sid;
    FleetVector m = FleetVector::zeros(static_cast<int>(caps.size()));
    for (auto& v : m.counts) ss >> v;
    double psi = 0.0;
    if (!(ss >> psi)) return std::nullopt;
    if (ids.empty() || ids.back() != sid) ids.push_back(sid);
    row_station.push_back(static_cast<int>(ids.size()) - 1);
    rows.emplace_back(std::move(m), psi);
  }
  PreparednessTable table(ids, caps);
  if (rows.size() != table.size()) return std::nullopt;
  for (std::size_t k = 0; k < rows.size(); ++k) table.set(row_station[k], rows[k].first, rows[k].second);
  return table;
}

PreparednessTable build_preparedness_table(std::span<const StationModel> models,
                                           const TableBuildOptions& options,
                                           TableBuildStats* stats) {
  if (models.empty()) throw ConfigError("no station models");
  const int na = models.front().n_amb_types;
  if (static_cast<int>(options.caps.size()) != na) throw ConfigError("caps size must equal the number of ambulance types");
  for (int c : options.caps) {
    if (c < 1) throw ConfigError("caps must be >= 1");
  }
  std::vector<int> ids;
  for (const auto& m : models) {
    m.validate();
    if (m.n_amb_types != na) throw ConfigError("station models disagree on ambulance types");
    ids.push_back(m.station_id);
  }
  PreparednessTable table(ids, options.caps);
  const auto vecs = table.all_vectors();
  const std::size_t n_tasks = vecs.size() * models.size();

  std::vector<double> values(n_tasks, 0.0);
  std::vector<double> seconds(n_tasks, 0.0);
  std::vector<std::size_t> sizes(n_tasks, 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::optional<TableBuildError> first_error;
  std::size_t first_error_task = n_tasks;

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n_tasks) return;
      const std::size_t s = k / vecs.size();
      const auto& m = vecs[k % vecs.size()];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const StateSpace space(models[s], m);
        const auto q = build_generator(models[s], space);
        const auto nu = stationary_distribution(q, options.method, options.tol);
        values[k] = steady_state_cost(models[s], space, nu);
        sizes[k] = static_cast<std::size_t>(space.size());
      } catch (const Error& e) {
        std::lock_guard lock(err_mu);
        std::string fleet;
        for (int v : m.counts) fleet += fmt::format("{}{}", fleet.empty() ? "" : ",", v);
        // Keep the lowest failing task so the reported system is deterministic.
        if (k < first_error_task) {
          first_error_task = k;
          first_error.emplace(fmt::format("station {} fleet ({}): {}", models[s].station_id, fleet, e.what()),
                              models[s].station_id, m);
        }
        failed = true;
        return;
      }
      seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };

  const auto t_start = std::chrono::steady_clock::now();
  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (first_error) throw *first_error;

  for (std::size_t k = 0; k < n_tasks; ++k) {
    table.set(static_cast<int>(k / vecs.size()), vecs[k % vecs.size()], values[k]);
  }
  if (stats) {
    stats->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    stats->systems = n_tasks;
    int max_total = 0;
    for (int c : options.caps) max_total += c;
    stats->seconds_by_fleet_size.assign(static_cast<std::size_t>(max_total) + 1, 0.0);
    stats->largest_state_space = 0;
    for (std::size_t k = 0; k < n_tasks; ++k) {
      stats->seconds_by_fleet_size[vecs[k % vecs.size()].total()] += seconds[k];
      stats->largest_state_space = std::max(stats->largest_state_space, sizes[k]);
    }
  }
  return table;
}

std::string model_hash(std::span<const StationModel> models, std::span<const int> caps) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  };
  for (int c : caps) mix(fmt::format("cap{};", c));
  for (const auto& m : models) {
    mix(fmt::format("s{};{};{};", m.station_id, m.n_amb_types, m.n_call_types));
    for (double v : m.lambda) mix(fmt::format("{:.17g};", v));
    for (double v : m.mu) mix(fmt::format("{:.17g};", v));
    for (double v : m.phi) mix(fmt::format("{:.17g};", v));
    for (const auto& list : m.compat) {
      for (int a : list) mix(fmt::format("{},", a));
      mix("|");
    }
  }
  return fmt::format("{:016x}", h);
}

}  // namespace ems
