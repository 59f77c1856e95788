#include "ems/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTravelFloor = 1.0;

double floored(double t) { return std::max(kTravelFloor, t); }

std::vector<int> available_ambulances(const SystemState& s) {
  std::vector<int> out;
  for (const auto& a : s.ambulances) {
    if (is_available(a.status)) out.push_back(a.id);
  }
  return out;
}

/// Travel time until ambulance `a` could reach `where`, counting the
/// forecast end of its current task.
double eta(const PolicyContext& ctx, const SystemState& s, const AmbulanceView& a, GeoPoint where) {
  if (is_available(a.status) || a.status == AmbStatus::released) return ctx.travel(a.location, where);
  return std::max(0.0, a.release_time - s.clock) + ctx.travel(a.release_location, where);
}

int closest_of(const PolicyContext& ctx, const SystemState& s, const std::vector<int>& candidates,
               GeoPoint where) {
  int best = -1;
  double best_t = kInf;
  for (int a : candidates) {
    const double t = ctx.travel(s.ambulances[a].location, where);
    if (t < best_t) {
      best_t = t;
      best = a;
    }
  }
  return best;
}

int closest_queued(const PolicyContext& ctx, const SystemState& s, GeoPoint from) {
  int best = -1;
  double best_t = kInf;
  for (const auto& call : s.queue) {
    const double t = ctx.travel(from, call.location);
    if (t < best_t) {
      best_t = t;
      best = call.id;
    }
  }
  return best;
}

PolicyDecision dispatch(int amb, int call) { return PolicyDecision{{{amb, call}}, {}}; }
PolicyDecision reposition(int amb, int station) { return PolicyDecision{{}, {{amb, station}}}; }

PolicyDecision oldest_or_station(const SystemState& s, int amb, int station) {
  if (!s.queue.empty()) return dispatch(amb, s.queue.front().id);
  return reposition(amb, station);
}

/// Per-zone sums of 1/max(1, t) over a set of ambulance positions.
std::vector<double> coverage_sums(const PolicyContext& ctx, const std::vector<GeoPoint>& where) {
  const auto& zones = ctx.city->zones;
  std::vector<double> sums(zones.size(), 0.0);
  for (std::size_t l = 0; l < zones.size(); ++l) {
    for (const auto& p : where) sums[l] += 1.0 / floored(ctx.travel(p, zones[l].centroid));
  }
  return sums;
}

double min_ratio(const PolicyContext& ctx, const std::vector<double>& sums) {
  double m = kInf;
  for (std::size_t l = 0; l < sums.size(); ++l) {
    if (ctx.zone_demand[l] > 0.0) m = std::min(m, sums[l] / ctx.zone_demand[l]);
  }
  return m;
}

std::vector<GeoPoint> positions(const SystemState& s, const std::vector<int>& ambs) {
  std::vector<GeoPoint> out;
  out.reserve(ambs.size());
  for (int a : ambs) out.push_back(s.ambulances[a].location);
  return out;
}

/// min_l psi_l^{-a} for every candidate a.
std::vector<double> removal_scores(const PolicyContext& ctx, const SystemState& s, const std::vector<int>& avail) {
  const auto& zones = ctx.city->zones;
  const auto sums = coverage_sums(ctx, positions(s, avail));
  std::vector<double> out;
  out.reserve(avail.size());
  for (int a : avail) {
    std::vector<double> reduced = sums;
    for (std::size_t l = 0; l < zones.size(); ++l) {
      reduced[l] -= 1.0 / floored(ctx.travel(s.ambulances[a].location, zones[l].centroid));
    }
    out.push_back(min_ratio(ctx, reduced));
  }
  return out;
}

/// min_l psi_l^{b+} for every station, the set of available ambulances fixed.
std::vector<double> addition_scores(const PolicyContext& ctx, const SystemState& s) {
  const auto& zones = ctx.city->zones;
  const auto sums = coverage_sums(ctx, positions(s, available_ambulances(s)));
  std::vector<double> out;
  for (const auto& st : ctx.city->stations) {
    std::vector<double> raised = sums;
    for (std::size_t l = 0; l < zones.size(); ++l) raised[l] += 1.0 / floored(ctx.travel(st.where, zones[l].centroid));
    out.push_back(min_ratio(ctx, raised));
  }
  return out;
}

/// Index of the largest score; ties go to the smaller `tie` value, then the
/// lower index.
int argmax_with_tie(const std::vector<double>& score, const std::vector<double>& tie) {
  int best = -1;
  for (int k = 0; k < static_cast<int>(score.size()); ++k) {
    if (best < 0 || score[k] > score[best] || (score[k] == score[best] && tie[k] < tie[best])) best = k;
  }
  return best;
}

int argmin_with_tie(const std::vector<double>& score, const std::vector<double>& tie) {
  std::vector<double> neg(score.size());
  std::transform(score.begin(), score.end(), neg.begin(), [](double v) { return -v; });
  return argmax_with_tie(neg, tie);
}

std::vector<double> travel_to(const PolicyContext& ctx, const SystemState& s, const std::vector<int>& ambs,
                              GeoPoint where) {
  std::vector<double> out;
  out.reserve(ambs.size());
  for (int a : ambs) out.push_back(ctx.travel(s.ambulances[a].location, where));
  return out;
}

std::vector<double> travel_to_stations(const PolicyContext& ctx, GeoPoint from) {
  std::vector<double> out;
  for (const auto& st : ctx.city->stations) out.push_back(ctx.travel(from, st.where));
  return out;
}

int closest_station(const PolicyContext& ctx, GeoPoint from) { return ctx.city->nearest_station(from); }

/// Bandara ordering: closest for high priority, least cumulative busy time
/// (ties by id) for low priority.
int bandara_choice(const PolicyContext& ctx, const SystemState& s, const std::vector<int>& avail,
                   const EmergencyCall& call) {
  if (avail.empty()) return -1;
  if (ctx.cost.high_priority[call.etype]) return closest_of(ctx, s, avail, call.location);
  int best = avail.front();
  for (int a : avail) {
    if (s.ambulances[a].busy_time < s.ambulances[best].busy_time) best = a;
  }
  return best;
}

// ---------------------------------------------------------------------------

class ClosestAvailable : public Policy {
 public:
  explicit ClosestAvailable(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "dummy_queue"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const int a = closest_of(ctx_, s, available_ambulances(s), call.location);
    return a < 0 ? PolicyDecision{} : dispatch(a, call.id);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    return oldest_or_station(s, amb, closest_station(ctx_, s.ambulances[amb].location));
  }

 private:
  PolicyContext ctx_;
};

class Andersson : public Policy {
 public:
  explicit Andersson(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "preparedness"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const auto avail = available_ambulances(s);
    if (avail.empty()) return {};
    const int k = argmax_with_tie(removal_scores(ctx_, s, avail), travel_to(ctx_, s, avail, call.location));
    return dispatch(avail[k], call.id);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    if (!s.queue.empty()) return dispatch(amb, s.queue.front().id);
    const int b = argmax_with_tie(addition_scores(ctx_, s), travel_to_stations(ctx_, s.ambulances[amb].location));
    return reposition(amb, b);
  }

 private:
  PolicyContext ctx_;
};

class Lee2011 : public Policy {
 public:
  explicit Lee2011(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "prep2"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const auto avail = available_ambulances(s);
    if (avail.empty()) return {};
    auto score = removal_scores(ctx_, s, avail);
    const auto t = travel_to(ctx_, s, avail, call.location);
    for (std::size_t k = 0; k < score.size(); ++k) score[k] /= floored(t[k]);
    return dispatch(avail[argmax_with_tie(score, t)], call.id);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    const GeoPoint here = s.ambulances[amb].location;
    if (!s.queue.empty()) return dispatch(amb, closest_queued(ctx_, s, here));
    return reposition(amb, closest_station(ctx_, here));
  }

 private:
  PolicyContext ctx_;
};

class Lee2014 : public Policy {
 public:
  explicit Lee2014(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "centrality"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    auto queue = s.queue;
    queue.push_back(call);
    return assign(s, queue, -1);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    PolicyDecision d;
    if (!s.queue.empty()) d = assign(s, s.queue, amb);
    const bool acted = std::any_of(d.dispatches.begin(), d.dispatches.end(),
                                   [&](auto p) { return p.first == amb; });
    if (!acted) d.repositions.emplace_back(amb, closest_station(ctx_, s.ambulances[amb].location));
    return d;
  }
  PolicyDecision on_review(const SystemState& s) const override {
    return s.queue.empty() ? PolicyDecision{} : assign(s, s.queue, -1);
  }

 private:
  /// Max-weight assignment of every ambulance to the calls in `queue`;
  /// returns the pairs whose ambulance can move now.
  PolicyDecision assign(const SystemState& s, const std::vector<EmergencyCall>& queue, int freed) const {
    const auto c = centrality(ctx_, queue, CentralityMeasure::distance);
    DispatchProblem p;
    p.n_amb_types = ctx_.cost.n_amb_types;
    p.n_stations = 1;
    for (const auto& a : s.ambulances) p.station_ambs.push_back({a.id, a.type, 0});
    for (const auto& call : queue) p.emergencies.push_back(call.id);
    for (const auto& a : s.ambulances) {
      for (std::size_t e = 0; e < queue.size(); ++e) {
        p.cost.push_back(-c[e] / (1.0 + eta(ctx_, s, a, queue[e].location)));
      }
    }
    p.gamma.assign(queue.size(), 0.0);
    p.s_minus.assign(static_cast<std::size_t>(p.n_amb_types), 0.0);
    p.s_plus.assign(static_cast<std::size_t>(p.n_amb_types), 0.0);
    PolicyDecision d;
    for (auto [a, e] : solve_linear(p).x) {
      if (s.available(a) || a == freed) d.dispatches.emplace_back(a, e);
    }
    return d;
  }

  PolicyContext ctx_;
};

class Lee2017 : public Policy {
 public:
  explicit Lee2017(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "dist_centrality"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const auto avail = available_ambulances(s);
    if (avail.empty()) return {};
    const auto& zones = ctx_.city->zones;
    const std::size_t n = avail.size();
    // Two smallest travel times per zone give min over a' != a in O(1).
    std::vector<std::vector<double>> t(n, std::vector<double>(zones.size()));
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < zones.size(); ++l) {
        t[k][l] = ctx_.travel(s.ambulances[avail[k]].location, zones[l].centroid);
      }
    }
    std::vector<double> score(n);
    const auto t_call = travel_to(ctx_, s, avail, call.location);
    for (std::size_t k = 0; k < n; ++k) {
      double sum = 0.0;
      for (std::size_t l = 0; l < zones.size(); ++l) {
        if (ctx_.zone_demand[l] <= 0.0) continue;
        double best = ctx_.params.t_max;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != k) best = std::min(best, t[j][l]);
        }
        sum += ctx_.zone_demand[l] * (1.0 + best);
      }
      score[k] = (1.0 + t_call[k]) * sum;
    }
    return dispatch(avail[argmin_with_tie(score, t_call)], call.id);
  }

  PolicyDecision on_free(const SystemState& s, int amb) const override {
    const GeoPoint here = s.ambulances[amb].location;
    if (s.queue.empty()) {
      auto score = addition_scores(ctx_, s);
      const auto t = travel_to_stations(ctx_, here);
      for (std::size_t b = 0; b < score.size(); ++b) score[b] /= floored(t[b]);
      return reposition(amb, argmax_with_tie(score, t));
    }
    const auto c = centrality(ctx_, s.queue, CentralityMeasure::weighted_degree);
    const double w = ctx_.params.p_no_transport;
    std::vector<double> score, t;
    for (std::size_t e = 0; e < s.queue.size(); ++e) {
      t.push_back(ctx_.travel(here, s.queue[e].location));
      score.push_back(std::pow(c[e], w) / (1.0 + t.back()));
    }
    return dispatch(amb, s.queue[argmax_with_tie(score, t)].id);
  }

 private:
  PolicyContext ctx_;
};

class Mayorga : public Policy {
 public:
  explicit Mayorga(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "district"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const auto avail = available_ambulances(s);
    if (avail.empty()) return {};
    const int district = ctx_.city->station_zone_map.at(call.zone);
    std::vector<int> local;
    for (int a : avail) {
      if (s.ambulances[a].home_station == district) local.push_back(a);
    }
    const int a = local.empty() ? bandara_choice(ctx_, s, avail, call) : closest_of(ctx_, s, local, call.location);
    return dispatch(a, call.id);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    return oldest_or_station(s, amb, s.ambulances[amb].home_station);
  }

 private:
  PolicyContext ctx_;
};

class Bandara : public Policy {
 public:
  explicit Bandara(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "ordered"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const int a = bandara_choice(ctx_, s, available_ambulances(s), call);
    return a < 0 ? PolicyDecision{} : dispatch(a, call.id);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    return oldest_or_station(s, amb, s.ambulances[amb].home_station);
  }

 private:
  PolicyContext ctx_;
};

class Jagtenberg : public Policy {
 public:
  explicit Jagtenberg(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "coverage"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    const auto avail = available_ambulances(s);
    if (avail.empty()) return {};
    const auto& zones = ctx_.city->zones;
    const double threshold = ctx_.params.coverage_threshold;
    std::vector<std::vector<char>> covers(avail.size(), std::vector<char>(zones.size(), 0));
    std::vector<int> k(zones.size(), 0);
    for (std::size_t j = 0; j < avail.size(); ++j) {
      for (std::size_t l = 0; l < zones.size(); ++l) {
        if (ctx_.travel(s.ambulances[avail[j]].location, zones[l].centroid) <= threshold) {
          covers[j][l] = 1;
          ++k[l];
        }
      }
    }
    std::vector<int> cand;
    std::vector<double> loss, t;
    for (std::size_t j = 0; j < avail.size(); ++j) {
      if (k[call.zone] > 0 && !covers[j][call.zone]) continue;
      double sum = 0.0;
      for (std::size_t l = 0; l < zones.size(); ++l) {
        if (covers[j][l]) sum += mexclp_marginal(ctx_.zone_demand[l], ctx_.params.busy_fraction, k[l]);
      }
      cand.push_back(avail[j]);
      loss.push_back(sum);
      t.push_back(ctx_.travel(s.ambulances[avail[j]].location, call.location));
    }
    return dispatch(cand[argmin_with_tie(loss, t)], call.id);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    return oldest_or_station(s, amb, s.ambulances[amb].home_station);
  }

 private:
  PolicyContext ctx_;
};

class Carvalho : public Policy {
 public:
  explicit Carvalho(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "tipat"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    auto queue = s.queue;
    queue.push_back(call);
    return batch(s, queue, -1);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    PolicyDecision d = batch(s, s.queue, amb);
    const bool acted = std::any_of(d.dispatches.begin(), d.dispatches.end(),
                                   [&](auto p) { return p.first == amb; });
    if (acted) return d;
    // Station for a0 minimizing the coverage term of the remaining fleet.
    std::vector<int> fleet = available_ambulances(s);
    for (auto [a, e] : d.dispatches) fleet.erase(std::find(fleet.begin(), fleet.end(), a));
    std::vector<GeoPoint> where = positions(s, fleet);
    std::vector<int> types;
    for (int a : fleet) types.push_back(s.ambulances[a].type);
    types.push_back(s.ambulances[amb].type);
    std::vector<double> score;
    for (const auto& st : ctx_.city->stations) {
      where.push_back(st.where);
      score.push_back(coverage_term(where, types));
      where.pop_back();
    }
    d.repositions.emplace_back(amb, argmin_with_tie(score, travel_to_stations(ctx_, s.ambulances[amb].location)));
    return d;
  }
  PolicyDecision on_review(const SystemState& s) const override {
    return s.queue.empty() ? PolicyDecision{} : batch(s, s.queue, -1);
  }

 private:
  /// prep_weight * sum_l sum_type lambda_l^type * min travel of that type.
  double coverage_term(const std::vector<GeoPoint>& where, const std::vector<int>& types) const {
    const auto& zones = ctx_.city->zones;
    double total = 0.0;
    for (std::size_t l = 0; l < zones.size(); ++l) {
      for (int ty = 0; ty < ctx_.cost.n_amb_types; ++ty) {
        const double lam = ctx_.zone_type_demand[ty][l];
        if (lam <= 0.0) continue;
        double best = ctx_.params.t_max;
        for (std::size_t j = 0; j < where.size(); ++j) {
          if (types[j] == ty) best = std::min(best, ctx_.travel(where[j], zones[l].centroid));
        }
        total += lam * best;
      }
    }
    return ctx_.params.prep_weight * total;
  }

  PolicyDecision batch(const SystemState& s, const std::vector<EmergencyCall>& queue, int freed) const {
    std::vector<int> ambs = available_ambulances(s);
    if (freed >= 0) ambs.push_back(freed);
    std::sort(ambs.begin(), ambs.end());
    const int na = static_cast<int>(ambs.size());
    const int ne = static_cast<int>(queue.size());
    if (na == 0 || ne == 0) return {};

    const auto& zones = ctx_.city->zones;
    const int nt = ctx_.cost.n_amb_types;
    // Cached per-ambulance zone travel times.
    std::vector<std::vector<double>> tz(na, std::vector<double>(zones.size()));
    for (int j = 0; j < na; ++j) {
      for (std::size_t l = 0; l < zones.size(); ++l) {
        tz[j][l] = ctx_.travel(s.ambulances[ambs[j]].location, zones[l].centroid);
      }
    }
    std::vector<double> excess(static_cast<std::size_t>(na) * ne);
    for (int j = 0; j < na; ++j) {
      for (int e = 0; e < ne; ++e) {
        const double t = ctx_.travel(s.ambulances[ambs[j]].location, queue[e].location);
        const double resp = (s.clock - queue[e].time) + t;
        excess[j * ne + e] = extra_response_time(ctx_.cost, queue[e].etype, resp) + 1e-6 * t;
      }
    }
    auto coverage_without = [&](const std::vector<char>& removed) {
      double total = 0.0;
      for (std::size_t l = 0; l < zones.size(); ++l) {
        for (int ty = 0; ty < nt; ++ty) {
          const double lam = ctx_.zone_type_demand[ty][l];
          if (lam <= 0.0) continue;
          double best = ctx_.params.t_max;
          for (int j = 0; j < na; ++j) {
            if (!removed[j] && s.ambulances[ambs[j]].type == ty) best = std::min(best, tz[j][l]);
          }
          total += lam * best;
        }
      }
      return ctx_.params.prep_weight * total;
    };

    // Number of partial injections of emergencies into ambulances.
    double leaves = 0.0;
    for (int k = 0; k <= std::min(na, ne); ++k) {
      double term = 1.0;
      for (int i = 0; i < k; ++i) term *= static_cast<double>(ne - i) * (na - i) / (i + 1);
      leaves += term;
    }

    std::vector<int> choice(static_cast<std::size_t>(ne), -1);
    if (leaves <= static_cast<double>(ctx_.params.carvalho_leaf_budget)) {
      std::vector<int> best_choice(choice);
      double best = kInf;
      std::vector<char> used(static_cast<std::size_t>(na), 0);
      auto rec = [&](auto&& self, int e, double partial) -> void {
        if (e == ne) {
          const double total = partial + coverage_without(used);
          if (total < best) {
            best = total;
            best_choice = choice;
          }
          return;
        }
        choice[e] = -1;
        self(self, e + 1, partial + ctx_.params.unserved_penalty);
        for (int j = 0; j < na; ++j) {
          if (used[j]) continue;
          used[j] = 1;
          choice[e] = j;
          self(self, e + 1, partial + excess[j * ne + e]);
          used[j] = 0;
        }
        choice[e] = -1;
      };
      rec(rec, 0, 0.0);
      choice = best_choice;
    } else {
      // Linearized: each ambulance's removal priced independently.
      const std::vector<char> none(static_cast<std::size_t>(na), 0);
      const double base = coverage_without(none);
      DispatchProblem p;
      p.n_amb_types = nt;
      p.n_stations = 1;
      for (int j = 0; j < na; ++j) p.station_ambs.push_back({ambs[j], s.ambulances[ambs[j]].type, 0});
      for (const auto& call : queue) p.emergencies.push_back(call.id);
      for (int j = 0; j < na; ++j) {
        std::vector<char> removed(none);
        removed[j] = 1;
        const double delta = coverage_without(removed) - base;
        for (int e = 0; e < ne; ++e) p.cost.push_back(excess[j * ne + e] + delta);
      }
      p.gamma.assign(static_cast<std::size_t>(ne), ctx_.params.unserved_penalty);
      p.s_minus.assign(static_cast<std::size_t>(nt), 0.0);
      p.s_plus.assign(static_cast<std::size_t>(nt), 0.0);
      for (auto [a, id] : solve_linear(p).x) {
        const int j = static_cast<int>(std::find(ambs.begin(), ambs.end(), a) - ambs.begin());
        for (int e = 0; e < ne; ++e) {
          if (queue[e].id == id) choice[e] = j;
        }
      }
    }
    PolicyDecision d;
    for (int e = 0; e < ne; ++e) {
      if (choice[e] >= 0) d.dispatches.emplace_back(ambs[choice[e]], queue[e].id);
    }
    return d;
  }

  PolicyContext ctx_;
};

class MarkovPreparedness : public Policy {
 public:
  explicit MarkovPreparedness(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "markov_preparedness"; }

  PolicyDecision on_call(const SystemState& s, const EmergencyCall& call) const override {
    return execute(s, solve(build_mp_problem(ctx_, s, &call)), -1);
  }
  PolicyDecision on_free(const SystemState& s, int amb) const override {
    return execute(s, solve(build_mp_problem(ctx_, s, nullptr)), amb);
  }
  PolicyDecision on_review(const SystemState& s) const override {
    if (s.queue.empty()) return {};
    return execute(s, solve(build_mp_problem(ctx_, s, nullptr)), -1);
  }

 private:
  DispatchDecision solve(const DispatchProblem& p) const {
    if (ctx_.params.mp_version == 1) {
      try {
        return solve_nonlinear(p, *ctx_.table, ctx_.params.leaf_budget);
      } catch (const BudgetExceededError&) {
      }
    }
    return solve_linear(p);
  }

  /// Dispatches of ambulances that can move now, plus the freed
  /// ambulance's action. Plans for on-task ambulances are dropped.
  static PolicyDecision execute(const SystemState& s, const DispatchDecision& d, int freed) {
    PolicyDecision out;
    for (auto [a, e] : d.x) {
      if (s.available(a) || a == freed) out.dispatches.emplace_back(a, e);
    }
    for (auto [a, b] : d.y) {
      if (a == freed) out.repositions.emplace_back(a, b);
    }
    return out;
  }

  PolicyContext ctx_;
};

}  // namespace

const char* to_string(AmbStatus s) {
  switch (s) {
    case AmbStatus::at_station: return "at_station";
    case AmbStatus::enroute_station: return "enroute_station";
    case AmbStatus::to_scene: return "to_scene";
    case AmbStatus::on_scene: return "on_scene";
    case AmbStatus::to_hospital: return "to_hospital";
    case AmbStatus::at_hospital: return "at_hospital";
    case AmbStatus::to_cleaning: return "to_cleaning";
    case AmbStatus::cleaning: return "cleaning";
    case AmbStatus::released: return "released";
  }
  return "?";
}

void PolicyContext::derive_demand() {
  if (city == nullptr) throw ConfigError("policy context has no city");
  const auto& rates = city->rates;
  if (rates.n_types() != cost.n_call_types) {
    throw ConfigError(fmt::format("rate table has {} call types, cost model {}", rates.n_types(), cost.n_call_types));
  }
  const std::size_t nz = city->zones.size();
  zone_demand.assign(nz, 0.0);
  zone_type_demand.assign(static_cast<std::size_t>(cost.n_amb_types), std::vector<double>(nz, 0.0));
  std::vector<int> first_choice;
  for (int c = 0; c < cost.n_call_types; ++c) first_choice.push_back(cost.preference(c).front());
  for (std::size_t l = 0; l < nz; ++l) {
    for (int c = 0; c < cost.n_call_types; ++c) {
      const double lam = rates.weekly_mean(static_cast<int>(l), c);
      zone_demand[l] += lam;
      zone_type_demand[first_choice[c]][l] += lam;
    }
  }
}

const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names = {
      "dummy_queue", "markov_preparedness", "preparedness", "prep2",    "centrality",
      "dist_centrality", "district",         "ordered",      "coverage", "tipat"};
  return names;
}

std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx) {
  if (ctx.city == nullptr) throw ConfigError("policy context has no city");
  if (ctx.zone_demand.size() != ctx.city->zones.size()) throw ConfigError("policy context demand not derived");
  if (name == "dummy_queue") return std::make_unique<ClosestAvailable>(ctx);
  if (name == "preparedness") return std::make_unique<Andersson>(ctx);
  if (name == "prep2") return std::make_unique<Lee2011>(ctx);
  if (name == "centrality") return std::make_unique<Lee2014>(ctx);
  if (name == "dist_centrality") return std::make_unique<Lee2017>(ctx);
  if (name == "district") return std::make_unique<Mayorga>(ctx);
  if (name == "ordered") return std::make_unique<Bandara>(ctx);
  if (name == "coverage") return std::make_unique<Jagtenberg>(ctx);
  if (name == "tipat") return std::make_unique<Carvalho>(ctx);
  if (name == "markov_preparedness") {
    if (ctx.table == nullptr) throw ConfigError("markov_preparedness needs a preparedness table");
    if (ctx.table->n_stations() != static_cast<int>(ctx.city->stations.size())) {
      throw ConfigError(fmt::format("table covers {} stations, instance has {}", ctx.table->n_stations(),
                                    ctx.city->stations.size()));
    }
    if (ctx.params.mp_version != 1 && ctx.params.mp_version != 2) throw ConfigError("mp version must be 1 or 2");
    return std::make_unique<MarkovPreparedness>(ctx);
  }
  throw ConfigError(fmt::format("unknown policy '{}'; known: {}", name, fmt::join(policy_names(), ", ")));
}

ZonePreparedness zone_preparedness(const PolicyContext& ctx, const std::vector<GeoPoint>& ambulances) {
  const auto sums = coverage_sums(ctx, ambulances);
  ZonePreparedness z;
  z.psi.resize(sums.size());
  for (std::size_t l = 0; l < sums.size(); ++l) {
    z.psi[l] = ctx.zone_demand[l] > 0.0 ? sums[l] / ctx.zone_demand[l] : std::numeric_limits<double>::quiet_NaN();
  }
  return z;
}

double min_preparedness(const ZonePreparedness& z) {
  double m = kInf;
  for (double v : z.psi) {
    if (!std::isnan(v)) m = std::min(m, v);
  }
  return m;
}

std::vector<double> centrality(const PolicyContext& ctx, const std::vector<EmergencyCall>& queue,
                               CentralityMeasure measure) {
  const std::size_t n = queue.size();
  std::vector<std::vector<double>> t(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) t[i][j] = ctx.travel(queue[i].location, queue[j].location);
    }
  }
  std::vector<double> c(n, 0.0);
  switch (measure) {
    case CentralityMeasure::weighted_degree:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) c[i] += 1.0 / (1.0 + t[i][j]);
        }
      }
      break;
    case CentralityMeasure::distance:
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += t[i][j];
        c[i] = 1.0 / (1.0 + sum);
      }
      break;
    case CentralityMeasure::betweenness: {
      // All-pairs shortest paths on the complete graph, with path counts.
      auto d = t;
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
        }
      }
      auto on_path = [&](double via, double direct) { return std::abs(via - direct) <= 1e-9 * (1.0 + direct); };
      // sigma[i][j]: number of shortest i->j paths, counted in order of distance.
      std::vector<std::vector<double>> sigma(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d[i][a] < d[i][b]; });
        sigma[i][i] = 1.0;
        for (std::size_t j : order) {
          if (j == i) continue;
          for (std::size_t k : order) {
            if (k == j || d[i][k] > d[i][j]) continue;
            if (on_path(d[i][k] + t[k][j], d[i][j])) sigma[i][j] += sigma[i][k];
          }
        }
      }
      for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t u = 0; u < n; ++u) {
            if (s == v || u == v || s == u || sigma[s][u] == 0.0) continue;
            if (on_path(d[s][v] + d[v][u], d[s][u])) c[v] += sigma[s][v] * sigma[v][u] / sigma[s][u];
          }
        }
      }
      break;
    }
  }
  return c;
}

double mexclp_marginal(double lambda, double q, int k) {
  if (k <= 0) return 0.0;
  return lambda * (1.0 - q) * std::pow(q, k - 1);
}

DispatchProblem build_mp_problem(const PolicyContext& ctx, const SystemState& s, const EmergencyCall* new_call) {
  DispatchProblem p;
  p.n_amb_types = ctx.cost.n_amb_types;
  p.n_stations = static_cast<int>(ctx.city->stations.size());
  for (const auto& a : s.ambulances) {
    if (is_available(a.status)) {
      p.station_ambs.push_back({a.id, a.type, a.station});
    } else {
      p.on_task.push_back({a.id, a.type, std::nullopt});
    }
  }
  std::vector<const EmergencyCall*> calls;
  for (const auto& c : s.queue) calls.push_back(&c);
  if (new_call != nullptr) calls.push_back(new_call);
  for (const auto* c : calls) p.emergencies.push_back(c->id);

  const double scale = ctx.params.gamma_scale;
  for (int row = 0; row < p.n_ambs(); ++row) {
    const auto& a = s.ambulances[p.amb_id(row)];
    for (const auto* c : calls) {
      const double wait = s.clock - c->time;
      const double resp = eta(ctx, s, a, c->location) + wait;
      p.cost.push_back(allocation_cost(ctx.cost, a.type, c->etype, resp));
    }
  }
  for (const auto* c : calls) {
    const double wait = s.clock - c->time;
    p.gamma.push_back(scale * ctx.cost.theta[c->etype] * (ctx.params.gamma_wait + 2.0 * wait));
  }
  p.big_gamma = ctx.params.big_gamma;
  p.fleets = s.fleets;
  p.set_marginals(*ctx.table);
  return p;
}

}  // namespace ems
