#include "ems/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

int DispatchProblem::amb_id(int amb_row) const {
  return is_on_task(amb_row) ? on_task[amb_row - station_ambs.size()].id : station_ambs[amb_row].id;
}

int DispatchProblem::amb_type(int amb_row) const {
  return is_on_task(amb_row) ? on_task[amb_row - station_ambs.size()].type
                             : station_ambs[amb_row].type;
}

bool DispatchProblem::station_permitted(int amb_row, int b) const {
  const auto& allowed = on_task[amb_row - station_ambs.size()].permitted_stations;
  return !allowed || std::find(allowed->begin(), allowed->end(), b) != allowed->end();
}

void DispatchProblem::set_marginals(const PreparednessTable& table) {
  if (static_cast<int>(fleets.size()) != n_stations) throw ModelingError("fleets size must equal n_stations");
  s_minus.assign(static_cast<std::size_t>(n_amb_types) * n_stations, 0.0);
  s_plus.assign(static_cast<std::size_t>(n_amb_types) * n_stations, 0.0);
  for (int b = 0; b < n_stations; ++b) {
    const double base = table.lookup(b, fleets[b]);
    for (int t = 0; t < n_amb_types; ++t) {
      FleetVector up = fleets[b];
      ++up[t];
      s_plus[t * n_stations + b] = table.lookup(b, up) - base;
      if (fleets[b][t] > 0) {
        FleetVector down = fleets[b];
        --down[t];
        s_minus[t * n_stations + b] = table.lookup(b, down) - base;
      }
    }
  }
}

void DispatchProblem::validate() const {
  const auto na = static_cast<std::size_t>(n_ambs());
  const auto ne = emergencies.size();
  if (cost.size() != na * ne) throw ModelingError("cost matrix size mismatch");
  if (gamma.size() != ne) throw ModelingError("gamma size mismatch");
  const auto ns = static_cast<std::size_t>(n_amb_types) * static_cast<std::size_t>(n_stations);
  if (s_minus.size() != ns || s_plus.size() != ns) throw ModelingError("marginal table size mismatch");
  std::set<int> ids;
  for (int row = 0; row < n_ambs(); ++row) {
    if (!ids.insert(amb_id(row)).second) throw ModelingError(fmt::format("duplicate ambulance id {}", amb_id(row)));
    const int t = amb_type(row);
    if (t < 0 || t >= n_amb_types) throw ModelingError("ambulance type out of range");
  }
  for (const auto& a : station_ambs) {
    if (a.station < 0 || a.station >= n_stations) throw ModelingError("station index out of range");
  }
  for (const auto& a : on_task) {
    if (a.permitted_stations) {
      if (a.permitted_stations->empty()) {
        throw ModelingError(fmt::format("on-task ambulance {} has no permitted station", a.id));
      }
      for (int b : *a.permitted_stations) {
        if (b < 0 || b >= n_stations) throw ModelingError("permitted station out of range");
      }
    } else if (n_stations == 0) {
      throw ModelingError(fmt::format("on-task ambulance {} has no permitted station", a.id));
    }
  }
  std::set<int> eids;
  for (int e : emergencies) {
    if (!eids.insert(e).second) throw ModelingError(fmt::format("duplicate emergency id {}", e));
  }
  for (double v : cost) {
    if (std::isnan(v) || v == -kForbidden) throw ModelingError("cost entries must be finite or kForbidden");
  }
  for (double g : gamma) {
    if (!std::isfinite(g)) throw ModelingError("gamma must be finite");
  }
}

namespace {

int find_row(const DispatchProblem& p, int amb_id) {
  for (int row = 0; row < p.n_ambs(); ++row) {
    if (p.amb_id(row) == amb_id) return row;
  }
  return -1;
}

int find_emergency(const DispatchProblem& p, int e_id) {
  for (int e = 0; e < p.n_emergencies(); ++e) {
    if (p.emergencies[e] == e_id) return e;
  }
  return -1;
}

// Cheapest permitted station (lowest index on ties) and its cost
// big_gamma * s_plus for an on-task row.
std::pair<int, double> best_station(const DispatchProblem& p, int row) {
  const int t = p.amb_type(row);
  int best = -1;
  double best_cost = 0.0;
  for (int b = 0; b < p.n_stations; ++b) {
    if (!p.station_permitted(row, b)) continue;
    const double c = p.big_gamma * p.s_plus[t * p.n_stations + b];
    if (best < 0 || c < best_cost) {
      best = b;
      best_cost = c;
    }
  }
  return {best, best_cost};
}

double dispatch_marginal(const DispatchProblem& p, int row) {
  if (p.is_on_task(row)) return 0.0;
  const auto& a = p.station_ambs[row];
  return p.big_gamma * p.s_minus[a.type * p.n_stations + a.station];
}

}  // namespace

double linear_objective(const DispatchProblem& p, const DispatchDecision& d) {
  double total = 0.0;
  std::vector<char> served(p.emergencies.size(), 0);
  for (const auto& [aid, eid] : d.x) {
    const int row = find_row(p, aid);
    const int e = find_emergency(p, eid);
    total += p.r(row, e) + dispatch_marginal(p, row);
    served[e] = 1;
  }
  for (std::size_t e = 0; e < served.size(); ++e) {
    if (!served[e]) total += p.gamma[e];
  }
  for (const auto& [aid, b] : d.y) {
    const int row = find_row(p, aid);
    total += p.big_gamma * p.s_plus[p.amb_type(row) * p.n_stations + b];
  }
  return total;
}

std::vector<FleetVector> post_decision_fleets(const DispatchProblem& p, const DispatchDecision& d) {
  std::vector<FleetVector> m = p.fleets;
  for (const auto& [aid, eid] : d.x) {
    const int row = find_row(p, aid);
    if (!p.is_on_task(row)) {
      const auto& a = p.station_ambs[row];
      --m[a.station][a.type];
    }
  }
  for (const auto& [aid, b] : d.y) {
    ++m[b][p.amb_type(find_row(p, aid))];
  }
  return m;
}

double nonlinear_objective(const DispatchProblem& p, const DispatchDecision& d,
                           const PreparednessTable& table) {
  double total = 0.0;
  std::vector<char> served(p.emergencies.size(), 0);
  for (const auto& [aid, eid] : d.x) {
    const int e = find_emergency(p, eid);
    total += p.r(find_row(p, aid), e);
    served[e] = 1;
  }
  for (std::size_t e = 0; e < served.size(); ++e) {
    if (!served[e]) total += p.gamma[e];
  }
  const auto m = post_decision_fleets(p, d);
  double prep = 0.0;
  for (int b = 0; b < p.n_stations; ++b) prep += table.lookup(b, m[b]);
  return total + p.big_gamma * prep;
}

void validate_decision(const DispatchProblem& p, const DispatchDecision& d) {
  std::vector<int> amb_uses(static_cast<std::size_t>(p.n_ambs()), 0);
  std::vector<int> e_uses(p.emergencies.size(), 0);
  for (const auto& [aid, eid] : d.x) {
    const int row = find_row(p, aid);
    const int e = find_emergency(p, eid);
    if (row < 0 || e < 0) throw ModelingError(fmt::format("x pair ({}, {}) is unknown", aid, eid));
    if (!std::isfinite(p.r(row, e))) throw ModelingError(fmt::format("x pair ({}, {}) is forbidden", aid, eid));
    ++amb_uses[row];
    ++e_uses[e];
  }
  for (const auto& [aid, b] : d.y) {
    const int row = find_row(p, aid);
    if (row < 0 || !p.is_on_task(row)) throw ModelingError(fmt::format("y pair for non on-task ambulance {}", aid));
    if (b < 0 || b >= p.n_stations || !p.station_permitted(row, b)) {
      throw ModelingError(fmt::format("ambulance {} sent to a station it may not use", aid));
    }
    ++amb_uses[row];
  }
  for (int row = 0; row < p.n_ambs(); ++row) {
    if (amb_uses[row] > 1) throw ModelingError(fmt::format("ambulance {} used twice", p.amb_id(row)));
    if (p.is_on_task(row) && amb_uses[row] != 1) {
      throw ModelingError(fmt::format("on-task ambulance {} has no action", p.amb_id(row)));
    }
  }
  for (std::size_t e = 0; e < e_uses.size(); ++e) {
    if (e_uses[e] > 1) throw ModelingError(fmt::format("emergency {} served twice", p.emergencies[e]));
  }
}

DispatchDecision solve_linear(const DispatchProblem& p) {
  p.validate();
  const int na = p.n_ambs();
  const int ne = p.n_emergencies();

  std::vector<std::pair<int, double>> outside(static_cast<std::size_t>(na), {-1, 0.0});
  for (int row = 0; row < na; ++row) {
    if (p.is_on_task(row)) outside[row] = best_station(p, row);
  }

  // Residual graph: source 0, ambulances 1..na, emergencies na+1..na+ne,
  // sink na+ne+1. Matching a to i replaces both outside options, so its arc
  // cost is c(a,i) - u(a) - gamma(i); augmenting paths are taken while their
  // cost is negative.
  struct Arc {
    int to;
    int rev;
    int cap;
    double cost;
  };
  const int n_nodes = na + ne + 2;
  const int src = 0, sink = na + ne + 1;
  std::vector<std::vector<Arc>> g(static_cast<std::size_t>(n_nodes));
  auto add_arc = [&](int u, int v, double cost) {
    g[u].push_back({v, static_cast<int>(g[v].size()), 1, cost});
    g[v].push_back({u, static_cast<int>(g[u].size()) - 1, 0, -cost});
  };
  // Emergencies in id order, ambulances in id order, so equal-cost paths are
  // discovered in a fixed order.
  std::vector<int> e_order(static_cast<std::size_t>(ne)), a_order(static_cast<std::size_t>(na));
  for (int e = 0; e < ne; ++e) e_order[e] = e;
  for (int a = 0; a < na; ++a) a_order[a] = a;
  std::sort(e_order.begin(), e_order.end(), [&](int l, int r) { return p.emergencies[l] < p.emergencies[r]; });
  std::sort(a_order.begin(), a_order.end(), [&](int l, int r) { return p.amb_id(l) < p.amb_id(r); });

  for (int row : a_order) add_arc(src, 1 + row, 0.0);
  for (int e : e_order) {
    for (int row : a_order) {
      const double r = p.r(row, e);
      if (!std::isfinite(r)) continue;
      add_arc(1 + row, 1 + na + e, r + dispatch_marginal(p, row) - outside[row].second - p.gamma[e]);
    }
  }
  for (int e : e_order) add_arc(1 + na + e, sink, 0.0);

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(n_nodes));
  std::vector<int> prev_node(static_cast<std::size_t>(n_nodes)), prev_arc(static_cast<std::size_t>(n_nodes));
  while (true) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev_node.begin(), prev_node.end(), -1);
    dist[src] = 0.0;
    // Bellman-Ford; the residual graph of a min-cost flow has no negative
    // cycles, so n-1 passes suffice.
    for (int pass = 0; pass < n_nodes - 1; ++pass) {
      bool changed = false;
      for (int u = 0; u < n_nodes; ++u) {
        if (dist[u] == inf) continue;
        for (std::size_t k = 0; k < g[u].size(); ++k) {
          const Arc& arc = g[u][k];
          if (arc.cap <= 0) continue;
          const double nd = dist[u] + arc.cost;
          if (nd < dist[arc.to] - 1e-12 * (1.0 + std::abs(nd))) {
            dist[arc.to] = nd;
            prev_node[arc.to] = u;
            prev_arc[arc.to] = static_cast<int>(k);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (!(dist[sink] < 0.0)) break;
    for (int v = sink; v != src; v = prev_node[v]) {
      Arc& arc = g[prev_node[v]][prev_arc[v]];
      arc.cap -= 1;
      g[v][arc.rev].cap += 1;
    }
  }

  DispatchDecision d;
  std::vector<char> matched(static_cast<std::size_t>(na), 0);
  for (int row : a_order) {
    for (const Arc& arc : g[1 + row]) {
      if (arc.to > na && arc.to <= na + ne && arc.cap == 0) {
        d.x.emplace_back(p.amb_id(row), p.emergencies[arc.to - 1 - na]);
        matched[row] = 1;
      }
    }
  }
  std::sort(d.x.begin(), d.x.end(), [](auto l, auto r) { return l.second < r.second; });
  for (int row = 0; row < na; ++row) {
    if (p.is_on_task(row) && !matched[row]) d.y.emplace_back(p.amb_id(row), outside[row].first);
  }
  validate_decision(p, d);
  d.objective = linear_objective(p, d);
  return d;
}

DispatchDecision solve_nonlinear(const DispatchProblem& p, const PreparednessTable& table,
                                 long leaf_budget) {
  p.validate();
  if (static_cast<int>(p.fleets.size()) != p.n_stations) throw ModelingError("fleets size must equal n_stations");
  for (const auto& a : p.station_ambs) {
    if (p.fleets[a.station][a.type] <= 0) throw ModelingError("station ambulance not counted in its fleet");
  }
  const int na = p.n_ambs();
  const int ne = p.n_emergencies();

  std::vector<FleetVector> m = p.fleets;
  std::vector<char> taken(static_cast<std::size_t>(ne), 0);
  // choice[row]: -1 = stay (station ambulance), 0..ne-1 = emergency,
  // ne + b = station b (on-task).
  std::vector<int> choice(static_cast<std::size_t>(na), -1), best_choice;
  double best = std::numeric_limits<double>::infinity();
  long leaves = 0;

  auto evaluate = [&](double running) {
    double total = running;
    for (int e = 0; e < ne; ++e) {
      if (!taken[e]) total += p.gamma[e];
    }
    double prep = 0.0;
    for (int b = 0; b < p.n_stations; ++b) prep += table.lookup(b, m[b]);
    return total + p.big_gamma * prep;
  };

  auto dfs = [&](auto&& self, int row, double running) -> void {
    if (row == na) {
      if (++leaves > leaf_budget) {
        throw BudgetExceededError(fmt::format("nonlinear dispatch search exceeded {} leaves", leaf_budget));
      }
      const double v = evaluate(running);
      if (v < best) {
        best = v;
        best_choice = choice;
      }
      return;
    }
    const int t = p.amb_type(row);
    if (!p.is_on_task(row)) {
      const auto& a = p.station_ambs[row];
      choice[row] = -1;
      self(self, row + 1, running);
      for (int e = 0; e < ne; ++e) {
        if (taken[e] || !std::isfinite(p.r(row, e))) continue;
        taken[e] = 1;
        --m[a.station][t];
        choice[row] = e;
        self(self, row + 1, running + p.r(row, e));
        ++m[a.station][t];
        taken[e] = 0;
      }
      choice[row] = -1;
      return;
    }
    for (int b = 0; b < p.n_stations; ++b) {
      if (!p.station_permitted(row, b)) continue;
      ++m[b][t];
      choice[row] = ne + b;
      self(self, row + 1, running);
      --m[b][t];
    }
    for (int e = 0; e < ne; ++e) {
      if (taken[e] || !std::isfinite(p.r(row, e))) continue;
      taken[e] = 1;
      choice[row] = e;
      self(self, row + 1, running + p.r(row, e));
      taken[e] = 0;
    }
    choice[row] = -1;
  };
  dfs(dfs, 0, 0.0);

  DispatchDecision d;
  for (int row = 0; row < na; ++row) {
    const int c = best_choice[row];
    if (c >= 0 && c < ne) {
      d.x.emplace_back(p.amb_id(row), p.emergencies[c]);
    } else if (c >= ne) {
      d.y.emplace_back(p.amb_id(row), c - ne);
    }
  }
  std::sort(d.x.begin(), d.x.end(), [](auto l, auto r) { return l.second < r.second; });
  validate_decision(p, d);
  d.objective = best;
  return d;
}

}  // namespace ems
