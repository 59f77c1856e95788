#include "ems/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "ems/errors.hpp"

namespace ems {

template <class Rng>
double sample_duration(DurationFamily family, double mean, double sd, Rng& rng) {
  if (family == DurationFamily::exponential) return std::exponential_distribution<double>(1.0 / mean)(rng);
  if (sd <= 0.0) return mean;
  const double s2 = std::log1p(sd * sd / (mean * mean));
  return std::lognormal_distribution<double>(std::log(mean) - 0.5 * s2, std::sqrt(s2))(rng);
}

template double sample_duration<std::mt19937_64>(DurationFamily, double, double, std::mt19937_64&);

ServiceParams ServiceParams::defaults(int n_types) {
  const auto n = static_cast<std::size_t>(n_types);
  ServiceParams p;
  p.on_scene_mean.assign(n, 600.0);
  p.on_scene_sd.assign(n, 300.0);
  p.hospital_mean.assign(n, 900.0);
  p.hospital_sd.assign(n, 450.0);
  p.cleaning_mean.assign(n, 600.0);
  p.cleaning_sd.assign(n, 300.0);
  p.p_transport.assign(n, 0.75);
  p.p_cleaning.assign(n, 0.3);
  return p;
}

void ServiceParams::validate(int n_types) const {
  const auto n = static_cast<std::size_t>(n_types);
  for (const auto* v : {&on_scene_mean, &on_scene_sd, &hospital_mean, &hospital_sd, &cleaning_mean, &cleaning_sd,
                        &p_transport, &p_cleaning}) {
    if (v->size() != n) throw ConfigError(fmt::format("service parameters must have {} entries per field", n));
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (!(on_scene_mean[c] > 0 && hospital_mean[c] > 0 && cleaning_mean[c] > 0)) {
      throw ConfigError("service duration means must be positive");
    }
    if (on_scene_sd[c] < 0 || hospital_sd[c] < 0 || cleaning_sd[c] < 0) {
      throw ConfigError("service duration sd must be non-negative");
    }
    if (!(p_transport[c] >= 0 && p_transport[c] <= 1 && p_cleaning[c] >= 0 && p_cleaning[c] <= 1)) {
      throw ConfigError("service probabilities must lie in [0, 1]");
    }
  }
}

double ServiceParams::mean_post_arrival(int c) const {
  return on_scene_mean[c] + p_transport[c] * hospital_mean[c] + p_cleaning[c] * cleaning_mean[c];
}

std::vector<AmbulanceSpec> round_robin_fleet(int n, int n_types, int n_stations) {
  if (n < 1) throw ConfigError("a fleet needs at least one ambulance");
  if (n_types < 1 || n_stations < 1) throw ConfigError("fleet needs at least one type and one station");
  std::vector<AmbulanceSpec> out;
  for (int k = 0; k < n; ++k) out.push_back({k % n_types, k % n_stations});
  return out;
}

bool redirectable(AmbStatus s) { return is_available(s); }

std::uint64_t replication_seed(std::uint64_t base, int rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(rep), 0x5eedu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

enum class EventKind {
  call_arrival,
  scene_arrival,
  scene_done,
  hospital_arrival,
  hospital_done,
  cleaning_arrival,
  cleaning_done,
  station_arrival,
  review,
};

struct Event {
  double time = 0.0;
  long seq = 0;
  EventKind kind = EventKind::call_arrival;
  int amb = -1;
  int call = -1;  // index into the call list
  long token = 0;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

/// Pre-sampled service attributes of one call.
struct CallService {
  double on_scene = 0.0;
  bool transport = false;
  double hospital = 0.0;
  bool cleaning = false;
  double clean = 0.0;
};

struct Amb {
  int type = 0;
  int home = 0;
  AmbStatus status = AmbStatus::at_station;
  int station = -1;
  GeoPoint origin;  // position at departure, or current position when stopped
  GeoPoint dest;
  double depart = 0.0;
  double arrive = 0.0;
  int call = -1;  // index into the call list
  double busy_since = 0.0;
  double busy_time = 0.0;
  double stage_start = 0.0;
  double stage_end = 0.0;
  long token = 0;
};

class Engine {
 public:
  Engine(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet, const Policy& policy,
         const SimConfig& config, std::vector<EmergencyCall> calls, std::uint64_t seed)
      : city_(city), policy_(policy), cfg_(config), calls_(std::move(calls)) {
    const int nc = cfg_.cost.n_call_types;
    cfg_.service.validate(nc);
    if (city_.stations.empty()) throw ConfigError("instance has no stations");
    if (city_.hospitals.empty()) throw ConfigError("instance has no hospitals");
    if (fleet.empty()) throw ConfigError("fleet is empty");
    for (std::size_t k = 0; k < calls_.size(); ++k) {
      const auto& c = calls_[k];
      if (c.etype < 0 || c.etype >= nc) throw ConfigError(fmt::format("call {} has unknown type {}", c.id, c.etype));
      if (k > 0 && c.time < calls_[k - 1].time) throw ConfigError("calls must be sorted by time");
      call_index_[c.id] = static_cast<int>(k);
    }
    if (call_index_.size() != calls_.size()) throw ConfigError("call ids must be unique");

    fleets_.assign(city_.stations.size(), FleetVector::zeros(cfg_.cost.n_amb_types));
    for (const auto& spec : fleet) {
      if (spec.type < 0 || spec.type >= cfg_.cost.n_amb_types) throw ConfigError("ambulance type out of range");
      if (spec.home_station < 0 || spec.home_station >= static_cast<int>(city_.stations.size())) {
        throw ConfigError("home station out of range");
      }
      Amb a;
      a.type = spec.type;
      a.home = spec.home_station;
      a.station = spec.home_station;
      a.origin = a.dest = city_.stations[spec.home_station].where;
      ambs_.push_back(a);
      ++fleets_[a.station][a.type];
    }

    services_.reserve(calls_.size());
    const auto& sp = cfg_.service;
    for (const auto& c : calls_) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(c.id), 0xca11u};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      CallService s;
      s.on_scene = sample_duration(sp.family, sp.on_scene_mean[c.etype], sp.on_scene_sd[c.etype], rng);
      s.transport = u(rng) < sp.p_transport[c.etype];
      s.hospital = sample_duration(sp.family, sp.hospital_mean[c.etype], sp.hospital_sd[c.etype], rng);
      s.cleaning = u(rng) < sp.p_cleaning[c.etype];
      s.clean = sample_duration(sp.family, sp.cleaning_mean[c.etype], sp.cleaning_sd[c.etype], rng);
      services_.push_back(s);
    }
    records_.resize(calls_.size());
    served_.assign(calls_.size(), 0);
  }

  ScenarioResult run() {
    for (std::size_t k = 0; k < calls_.size(); ++k) {
      push({calls_[k].time, 0, EventKind::call_arrival, -1, static_cast<int>(k), 0});
    }
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      if (ev.time < clock_) throw SimulationFault("event clock moved backwards");
      clock_ = ev.time;
      if (clock_ > cfg_.horizon + cfg_.drain_limit) {
        throw SimulationFault(fmt::format("service still running at t = {:.0f} s", clock_));
      }
      ++result_.n_events;
      handle(ev);
      if (!queue_.empty() && !review_pending_) {
        review_pending_ = true;
        push({clock_ + cfg_.review_period, 0, EventKind::review, -1, -1, 0});
      }
      result_.max_queue = std::max(result_.max_queue, queue_.size());
      if (cfg_.audit) audit();
    }
    if (!queue_.empty()) throw SimulationFault(fmt::format("{} calls never served", queue_.size()));
    for (std::size_t k = 0; k < calls_.size(); ++k) {
      if (served_[k] != 2) throw SimulationFault(fmt::format("call {} has no completed record", calls_[k].id));
    }
    result_.n_calls = calls_.size();
    result_.records = std::move(records_);
    std::sort(result_.records.begin(), result_.records.end(),
              [](const auto& l, const auto& r) { return l.call_id < r.call_id; });
    return std::move(result_);
  }

 private:
  void push(Event ev) {
    ev.seq = next_seq_++;
    events_.push(ev);
  }

  double travel(GeoPoint p, GeoPoint q) const { return city_.travel_time(p, q); }

  GeoPoint position(const Amb& a) const {
    switch (a.status) {
      case AmbStatus::enroute_station:
      case AmbStatus::to_scene:
      case AmbStatus::to_hospital:
      case AmbStatus::to_cleaning: {
        if (city_.travel.mode() == TravelProvider::Mode::matrix || a.arrive <= a.depart) return a.origin;
        const double f = std::clamp((clock_ - a.depart) / (a.arrive - a.depart), 0.0, 1.0);
        return interpolate_great_circle(a.origin, a.dest, f);
      }
      default:
        return a.origin;
    }
  }

  /// Expected end time and place of the current task.
  std::pair<double, GeoPoint> forecast(const Amb& a) const {
    const auto& sp = cfg_.service;
    const auto& call = calls_[a.call];
    const int c = call.etype;
    const GeoPoint scene = call.location;
    const GeoPoint hosp = city_.hospitals[city_.nearest_hospital(scene)].where;
    // Travel legs end at their scheduled arrival; stationary stages are
    // assumed to last their mean.
    double t = a.stage_end;
    auto stage_mean = [&](double mean) { return std::max(clock_, a.stage_start + mean); };
    GeoPoint where = a.dest;
    auto cleaning_tail = [&](GeoPoint from, double p) {
      const GeoPoint st = city_.stations[city_.nearest_station(from)].where;
      t += p * (travel(from, st) + sp.cleaning_mean[c]);
      if (p >= 0.5) where = st;
    };
    switch (a.status) {
      case AmbStatus::to_scene:
        t += sp.on_scene_mean[c];
        [[fallthrough]];
      case AmbStatus::on_scene: {
        if (a.status == AmbStatus::on_scene) t = stage_mean(sp.on_scene_mean[c]);
        const double pt = sp.p_transport[c];
        t += pt * (travel(scene, hosp) + sp.hospital_mean[c]);
        const GeoPoint last = pt >= 0.5 ? hosp : scene;
        where = last;
        cleaning_tail(last, sp.p_cleaning[c]);
        break;
      }
      case AmbStatus::to_hospital:
        t += sp.hospital_mean[c];
        [[fallthrough]];
      case AmbStatus::at_hospital:
        if (a.status == AmbStatus::at_hospital) t = stage_mean(sp.hospital_mean[c]);
        where = hosp;
        cleaning_tail(hosp, sp.p_cleaning[c]);
        break;
      case AmbStatus::to_cleaning:
        t += sp.cleaning_mean[c];
        break;
      case AmbStatus::cleaning:
        t = stage_mean(sp.cleaning_mean[c]);
        break;
      default:
        break;
    }
    return {t, where};
  }

  SystemState view() const {
    SystemState s;
    s.clock = clock_;
    s.queue.reserve(queue_.size());
    for (int k : queue_) s.queue.push_back(calls_[k]);
    s.fleets = fleets_;
    for (std::size_t id = 0; id < ambs_.size(); ++id) {
      const Amb& a = ambs_[id];
      AmbulanceView v;
      v.id = static_cast<int>(id);
      v.type = a.type;
      v.status = a.status;
      v.station = is_available(a.status) ? a.station : -1;
      v.home_station = a.home;
      v.location = position(a);
      v.emergency = a.call >= 0 ? calls_[a.call].id : -1;
      v.busy_time = a.busy_time;
      if (a.call >= 0 && a.status != AmbStatus::released) {
        std::tie(v.release_time, v.release_location) = forecast(a);
      } else {
        v.release_time = clock_;
        v.release_location = v.location;
      }
      s.ambulances.push_back(v);
    }
    return s;
  }

  void move(int id, AmbStatus status, GeoPoint to, EventKind arrival) {
    Amb& a = ambs_[id];
    const GeoPoint from = position(a);
    const double t = travel(from, to);
    a.status = status;
    a.origin = from;
    a.dest = to;
    a.depart = clock_;
    a.arrive = clock_ + t;
    a.stage_end = a.arrive;
    push({a.arrive, 0, arrival, id, a.call, a.token});
  }

  void stop(int id, AmbStatus status) {
    Amb& a = ambs_[id];
    a.origin = a.dest;
    a.status = status;
    a.stage_start = clock_;
  }

  void log(const char* epoch, const char* action, int amb, int target, GeoPoint from, GeoPoint to, double t) {
    if (cfg_.log_decisions) result_.log.push_back({clock_, epoch, action, amb, target, from, to, t});
  }

  void handle(const Event& ev) {
    switch (ev.kind) {
      case EventKind::call_arrival: {
        const auto& call = calls_[ev.call];
        const auto state = view();
        const auto decision = timed([&] { return policy_.on_call(state, call); });
        apply(decision, "call", -1, ev.call);
        break;
      }
      case EventKind::review: {
        review_pending_ = false;
        if (queue_.empty()) break;
        const auto state = view();
        apply(timed([&] { return policy_.on_review(state); }), "review", -1, -1);
        break;
      }
      case EventKind::scene_arrival: {
        Amb& a = ambs_[ev.amb];
        stop(ev.amb, AmbStatus::on_scene);
        a.stage_end = clock_ + services_[a.call].on_scene;
        push({a.stage_end, 0, EventKind::scene_done, ev.amb, a.call, a.token});
        break;
      }
      case EventKind::scene_done: {
        Amb& a = ambs_[ev.amb];
        const GeoPoint scene = calls_[a.call].location;
        if (services_[a.call].transport) {
          move(ev.amb, AmbStatus::to_hospital, city_.hospitals[city_.nearest_hospital(scene)].where,
               EventKind::hospital_arrival);
        } else {
          after_care(ev.amb, scene);
        }
        break;
      }
      case EventKind::hospital_arrival: {
        Amb& a = ambs_[ev.amb];
        stop(ev.amb, AmbStatus::at_hospital);
        a.stage_end = clock_ + services_[a.call].hospital;
        push({a.stage_end, 0, EventKind::hospital_done, ev.amb, a.call, a.token});
        break;
      }
      case EventKind::hospital_done:
        after_care(ev.amb, ambs_[ev.amb].origin);
        break;
      case EventKind::cleaning_arrival: {
        Amb& a = ambs_[ev.amb];
        stop(ev.amb, AmbStatus::cleaning);
        a.stage_end = clock_ + services_[a.call].clean;
        push({a.stage_end, 0, EventKind::cleaning_done, ev.amb, a.call, a.token});
        break;
      }
      case EventKind::cleaning_done:
        release(ev.amb);
        break;
      case EventKind::station_arrival: {
        Amb& a = ambs_[ev.amb];
        if (ev.token != a.token || a.status != AmbStatus::enroute_station) break;  // redirected
        stop(ev.amb, AmbStatus::at_station);
        break;
      }
    }
  }

  void after_care(int id, GeoPoint here) {
    Amb& a = ambs_[id];
    if (services_[a.call].cleaning) {
      move(id, AmbStatus::to_cleaning, city_.stations[city_.nearest_station(here)].where,
           EventKind::cleaning_arrival);
    } else {
      release(id);
    }
  }

  void release(int id) {
    Amb& a = ambs_[id];
    const int k = a.call;
    records_[k].finish_time = clock_;
    served_[k] = 2;
    a.busy_time += clock_ - a.busy_since;
    stop(id, AmbStatus::released);
    ++result_.n_free_epochs;
    const auto state = view();
    apply(timed([&] { return policy_.on_free(state, id); }), "free", id, -1);
  }

  template <class F>
  PolicyDecision timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    PolicyDecision d = f();
    result_.policy_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return d;
  }

  /// Validates a decision against the live state, then carries it out.
  /// `freed` is the released ambulance and `arriving` the new call (list
  /// index), -1 when absent.
  void apply(const PolicyDecision& d, const char* epoch, int freed, int arriving) {
    std::vector<char> amb_used(ambs_.size(), 0);
    std::vector<int> targets;
    auto check_amb = [&](int id) {
      if (id < 0 || id >= static_cast<int>(ambs_.size())) throw SimulationFault(fmt::format("unknown ambulance {}", id));
      if (amb_used[id]++) throw SimulationFault(fmt::format("ambulance {} given two actions", id));
      if (id != freed && !redirectable(ambs_[id].status)) {
        throw SimulationFault(fmt::format("ambulance {} is {} and cannot be redirected", id,
                                          to_string(ambs_[id].status)));
      }
    };
    for (auto [id, call_id] : d.dispatches) {
      check_amb(id);
      const auto it = call_index_.find(call_id);
      if (it == call_index_.end()) throw SimulationFault(fmt::format("dispatch to unknown call {}", call_id));
      const int k = it->second;
      const bool waiting = std::find(queue_.begin(), queue_.end(), k) != queue_.end();
      if (!waiting && k != arriving) throw SimulationFault(fmt::format("call {} is not waiting", call_id));
      if (std::find(targets.begin(), targets.end(), k) != targets.end()) {
        throw SimulationFault(fmt::format("call {} dispatched twice", call_id));
      }
      targets.push_back(k);
    }
    for (auto [id, b] : d.repositions) {
      check_amb(id);
      if (b < 0 || b >= static_cast<int>(city_.stations.size())) {
        throw SimulationFault(fmt::format("reposition to unknown station {}", b));
      }
    }
    if (freed >= 0 && !amb_used[freed]) throw SimulationFault(fmt::format("ambulance {} was given no action", freed));

    for (auto [id, call_id] : d.dispatches) {
      const int k = call_index_.at(call_id);
      Amb& a = ambs_[id];
      if (is_available(a.status)) --fleets_[a.station][a.type];
      ++a.token;
      a.call = k;
      a.busy_since = clock_;
      a.station = -1;
      const GeoPoint from = position(a);
      const auto& call = calls_[k];
      move(id, AmbStatus::to_scene, call.location, EventKind::scene_arrival);
      const double t = a.arrive - clock_;
      auto& rec = records_[k];
      rec.call_id = call.id;
      rec.etype = call.etype;
      rec.call_time = call.time;
      rec.amb_id = id;
      rec.amb_type = a.type;
      rec.dispatch_time = clock_;
      rec.response_time = a.arrive - call.time;
      rec.allocation_cost = allocation_cost(cfg_.cost, a.type, call.etype, rec.response_time);
      served_[k] = 1;
      queue_.erase(std::remove(queue_.begin(), queue_.end(), k), queue_.end());
      log(epoch, "dispatch", id, call.id, from, call.location, t);
    }
    for (auto [id, b] : d.repositions) {
      Amb& a = ambs_[id];
      if (is_available(a.status)) --fleets_[a.station][a.type];
      ++a.token;
      a.call = -1;
      a.station = b;
      ++fleets_[b][a.type];
      const GeoPoint from = position(a);
      move(id, AmbStatus::enroute_station, city_.stations[b].where, EventKind::station_arrival);
      log(epoch, "reposition", id, b, from, city_.stations[b].where, a.arrive - clock_);
    }
    if (arriving >= 0 && served_[arriving] == 0) queue_.push_back(arriving);
  }

  void audit() const {
    std::vector<FleetVector> recount(city_.stations.size(), FleetVector::zeros(cfg_.cost.n_amb_types));
    for (const auto& a : ambs_) {
      if (is_available(a.status)) ++recount[a.station][a.type];
    }
    if (recount != fleets_) throw SimulationFault(fmt::format("fleet bookkeeping drifted at t = {}", clock_));
    std::vector<char> busy(calls_.size(), 0);
    for (const auto& a : ambs_) {
      if (a.call < 0 || is_available(a.status)) continue;
      if (busy[a.call]++) throw SimulationFault("two ambulances hold the same call");
    }
    for (std::size_t k = 1; k < queue_.size(); ++k) {
      if (calls_[queue_[k]].time < calls_[queue_[k - 1]].time) throw SimulationFault("queue out of order");
    }
  }

  const CityInstance& city_;
  const Policy& policy_;
  SimConfig cfg_;
  std::vector<EmergencyCall> calls_;
  std::map<int, int> call_index_;
  std::vector<CallService> services_;
  std::vector<Amb> ambs_;
  std::vector<FleetVector> fleets_;
  std::vector<int> queue_;  // call list indices, by arrival
  std::vector<EmergencyRecord> records_;
  std::vector<char> served_;  // 0 waiting, 1 dispatched, 2 finished
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  long next_seq_ = 0;
  double clock_ = 0.0;
  bool review_pending_ = false;
  ScenarioResult result_;
};

}  // namespace

ScenarioResult run_calls(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet, const Policy& policy,
                         const SimConfig& config, std::vector<EmergencyCall> calls, std::uint64_t seed) {
  return Engine(city, fleet, policy, config, std::move(calls), seed).run();
}

ScenarioResult run_scenario(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet, const Policy& policy,
                            const SimConfig& config, std::uint64_t seed) {
  auto calls = sample_scenario(city.rates, city.zones, config.horizon, seed, config.placement);
  return run_calls(city, fleet, policy, config, std::move(calls), seed);
}

std::vector<ScenarioResult> run_replications(const CityInstance& city, const std::vector<AmbulanceSpec>& fleet,
                                             const Policy& policy, const SimConfig& config,
                                             std::uint64_t base_seed, int n, int jobs) {
  if (n < 0) throw ConfigError("replication count must be non-negative");
  std::vector<ScenarioResult> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < n; rep = next++) {
      try {
        out[rep] = run_scenario(city, fleet, policy, config, replication_seed(base_seed, rep));
      } catch (...) {
        errors[rep] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int j = 1; j < std::max(1, std::min(jobs, n)); ++j) pool.emplace_back(worker);
    worker();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_decision_log(const std::filesystem::path& path, const std::vector<DecisionLogEntry>& log,
                        const std::string& policy) {
  std::ofstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot write {}", path.string()));
  f << "time,epoch,policy,action,amb,target,from_lat,from_lon,to_lat,to_lon,travel\n";
  for (const auto& e : log) {
    f << fmt::format("{:.17g},{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", e.time, e.epoch, policy,
                     e.action, e.amb, e.target, e.from.lat, e.from.lon, e.to.lat, e.to.lon, e.travel);
  }
}

}  // namespace ems
