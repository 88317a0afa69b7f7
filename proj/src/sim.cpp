#include "mecctl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <stdexcept>
#include <tuple>

#include "mecctl/nodectl.hpp"

namespace mecctl::sim {

using placement::ResourceKind;

// ---------------------------------------------------------------- validation

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  auto err = [&](const std::string& path, const std::string& msg) { out.push_back(path + ": " + msg); };
  if (s.format_version != 1) err("format_version", "unsupported version " + std::to_string(s.format_version));
  if (!(s.duration_s > 0)) err("duration_s", "must be > 0");
  if (s.warmup_s < 0 || s.warmup_s >= s.duration_s) err("report.warmup_s", "must be in [0, duration_s)");
  if (s.nodes.empty()) err("nodes", "at least one node is required");
  std::set<std::string> ids;
  for (std::size_t j = 0; j < s.nodes.size(); ++j) {
    const auto path = "nodes[" + std::to_string(j) + "]";
    if (!ids.insert(s.nodes[j].id).second) err(path + ".id", "duplicate id '" + s.nodes[j].id + "'");
    for (const auto& e : topology::validate_node(s.nodes[j])) err(path, e);
  }
  if (s.delays.size() != s.nodes.size()) {
    err("delays_ms", "must be a " + std::to_string(s.nodes.size()) + "x" + std::to_string(s.nodes.size()) +
                         " matrix");
  } else {
    for (const auto& e : s.delays.validate()) out.push_back("delays_ms" + e);
  }
  if (s.functions.empty()) err("functions", "at least one function is required");
  std::set<std::string> names;
  for (std::size_t f = 0; f < s.functions.size(); ++f) {
    const auto path = "functions[" + std::to_string(f) + "]";
    const auto& fc = s.functions[f];
    if (!names.insert(fc.spec.name).second) err(path + ".name", "duplicate name '" + fc.spec.name + "'");
    for (const auto& e : validate_function(fc.spec)) err(path, e);
    if (!(fc.demand.mean_core_ms > 0)) err(path + ".demand.mean_core_ms", "must be > 0");
    if (fc.demand.cv < 0) err(path + ".demand.cv", "must be >= 0");
    if (fc.noise.mean_ms < 0 || fc.noise.cv < 0) err(path + ".noise", "mean_ms and cv must be >= 0");
    if (fc.gpu.has_value() != fc.spec.gpu_memory_mb.has_value()) {
      err(path + ".gpu", "gpu and gpu_memory_mb must be given together");
    }
    if (fc.gpu) {
      if (!(fc.gpu->service_ms > 0)) err(path + ".gpu.service_ms", "must be > 0");
      if (fc.gpu->slot_mc <= 0) err(path + ".gpu.slot_mc", "must be > 0");
      if (!(fc.gpu->usage_core_s > 0)) err(path + ".gpu.usage_core_s", "must be > 0");
    }
    if (fc.setpoint_ms && !(*fc.setpoint_ms > 0)) err(path + ".setpoint_ms", "must be > 0");
  }
  const auto& c = s.control;
  if (!(c.node_period_s > 0)) err("control.node_period_s", "must be > 0");
  if (!(c.community_period_s >= c.node_period_s)) err("control.community_period_s", "must be >= node period");
  if (!(c.topology_period_s >= c.community_period_s)) {
    err("control.topology_period_s", "must be >= community period");
  }
  if (c.epsilon < 0) err("control.epsilon", "must be >= 0");
  if (c.min_mc <= 0) err("control.pi.min_mc", "must be > 0");
  if (c.max_mc && *c.max_mc < c.min_mc) err("control.pi.max_mc", "must be >= min_mc");
  for (const auto& e : topology::validate_params(c.community)) err("control.community", e);
  if (!(c.cpu_utilization_target > 0 && c.cpu_utilization_target <= 1)) {
    err("control.cpu_utilization_target", "must be in (0, 1]");
  }
  if (!(c.gpu_utilization_target > 0 && c.gpu_utilization_target <= 1)) {
    err("control.gpu_utilization_target", "must be in (0, 1]");
  }
  if (!(c.per_request_cap_mc > 0)) err("control.per_request_cap_mc", "must be > 0");
  if (!(c.usage_ewma_alpha > 0 && c.usage_ewma_alpha <= 1)) err("control.usage_ewma_alpha", "must be in (0, 1]");
  if (c.retry_window_s && *c.retry_window_s < 0) err("control.retry_window_s", "must be >= 0");

  std::set<std::string> areas;
  for (const auto& n : s.nodes) areas.insert(n.area);
  for (std::size_t w = 0; w < s.workload.size(); ++w) {
    const auto path = "workload[" + std::to_string(w) + "]";
    const auto& p = s.workload[w];
    if (p.function >= s.functions.size()) err(path + ".function", "unknown function");
    auto check_node = [&](std::size_t j, const std::string& at) {
      if (j >= s.nodes.size()) err(at, "unknown node");
    };
    switch (p.kind) {
      case WorkloadProgram::Kind::fixed:
        check_node(p.node, path + ".node");
        if (!(p.rate_rps >= 0)) err(path + ".rate_rps", "must be >= 0");
        break;
      case WorkloadProgram::Kind::ramp:
        if (p.nodes.empty()) err(path + ".nodes", "at least one ingress node is required");
        for (std::size_t k = 0; k < p.nodes.size(); ++k) check_node(p.nodes[k], path + ".nodes[" + std::to_string(k) + "]");
        if (p.start_users < 0 || p.add_per_s < 0 || p.max_users < p.start_users) {
          err(path, "need 0 <= start_users <= max_users and add_per_s >= 0");
        }
        break;
      case WorkloadProgram::Kind::migration:
        if (p.users == 0) err(path + ".users", "must be > 0");
        if (!areas.count(p.from_area)) err(path + ".from_area", "no node in area '" + p.from_area + "'");
        for (std::size_t m = 0; m < p.moves.size(); ++m) {
          if (!areas.count(p.moves[m].to_area)) {
            err(path + ".moves[" + std::to_string(m) + "].to_area", "no node in area '" + p.moves[m].to_area + "'");
          }
          if (p.moves[m].window_s < 0) err(path + ".moves[" + std::to_string(m) + "].window_s", "must be >= 0");
        }
        break;
      case WorkloadProgram::Kind::trace:
        for (std::size_t k = 0; k < p.trace.size(); ++k) {
          check_node(p.trace[k].second, path + ".arrivals[" + std::to_string(k) + "].node");
        }
        break;
    }
    if (p.kind == WorkloadProgram::Kind::ramp || p.kind == WorkloadProgram::Kind::migration) {
      if (p.think.closed_loop ? !(p.think.mean_s > 0) : !(p.think.rate_per_user > 0)) {
        err(path + ".think", "think time or per-user rate must be > 0");
      }
    }
  }
  return out;
}

std::vector<std::string> scenario_warnings(const Scenario& s) {
  std::vector<std::string> out;
  const bool any_gpu = std::any_of(s.nodes.begin(), s.nodes.end(), [](const auto& n) { return n.has_gpu(); });
  for (std::size_t f = 0; f < s.functions.size(); ++f) {
    if (s.functions[f].spec.gpu_capable() && !any_gpu) {
      out.push_back("functions[" + std::to_string(f) + "]: '" + s.functions[f].spec.name +
                    "' is GPU-capable but no node has a GPU; it will run on CPUs only");
    }
  }
  return out;
}

// ---------------------------------------------------------------- engine

namespace {

enum class Ev {
  topology_tick,
  community_tick,
  node_tick,
  program_arrival,  // a: program
  user_start,       // a: user
  user_request,     // a: user
  reach_node,       // a: request, b: instance
  instance_done,    // a: instance, b: version
  noise_done,       // a: request
  instance_ready,   // a: instance
  drain_deadline,   // a: instance
  retry_expired,    // a: request
};

int priority(Ev e) {
  switch (e) {
    case Ev::topology_tick:
      return 0;
    case Ev::community_tick:
      return 1;
    case Ev::node_tick:
      return 2;
    default:
      return 3;
  }
}

struct Event {
  double t;
  int prio;
  std::uint64_t seq;
  Ev type;
  std::uint64_t a;
  std::uint64_t b;
  bool operator>(const Event& o) const {
    return std::tie(t, prio, seq) > std::tie(o.t, o.prio, o.seq);
  }
};

enum class State { cold, ready, draining, removed };

struct Instance {
  std::uint64_t id = 0;
  std::size_t fn = 0;
  std::size_t node = 0;
  ResourceKind kind = ResourceKind::cpu;
  State state = State::cold;
  bool to_delete = false;
  std::int64_t allocated_mc = 0;  // CPU grant or GPU share
  double planned_rps = 0.0;
  nodectl::PiControllerState pi;
  std::unique_ptr<PsServer> ps;
  std::unique_ptr<GpuServer> gpu;
  std::uint64_t version = 0;
  std::size_t network_pending = 0;
  double qe_sum = 0.0;
  std::size_t qe_count = 0;
  std::map<std::uint64_t, double> inflight;  // request -> time it reached the node
  bool fresh = true;                         // has not received a request yet

  bool busy() const {
    const std::size_t work = ps ? ps->in_service() + ps->queued() : gpu->in_service() + gpu->queued();
    return work > 0 || network_pending > 0;
  }
};

struct RouteEntry {
  ResourceKind kind;
  std::size_t node;
  double prob;
};
using RouteRow = std::vector<RouteEntry>;

struct PendingPlan {
  std::vector<std::size_t> ingress;                  // global node ids the rows belong to
  std::vector<std::vector<RouteRow>> rows;           // [f][k] for ingress[k]
  std::map<std::tuple<int, std::size_t, std::size_t>, double> planned;  // key -> rps
  ActivatedPlacement activation;
};

struct User {
  std::size_t program = 0;
  std::size_t index = 0;
  bool active = false;
};

struct Pending {
  std::uint64_t request = 0;
  double deadline = 0.0;
};

using Key = std::tuple<int, std::size_t, std::size_t>;  // (kind, function, node)

Key key_of(ResourceKind kind, std::size_t f, std::size_t node) {
  return {kind == ResourceKind::gpu ? 1 : 0, f, node};
}

class Engine {
 public:
  explicit Engine(const Scenario& s)
      : s_(s),
        nf_(s.functions.size()),
        nn_(s.nodes.size()),
        route_rng_(derive_seed(s.seed, 1)),
        demand_rng_(derive_seed(s.seed, 2)),
        noise_rng_(derive_seed(s.seed, 3)) {
    for (std::size_t p = 0; p < s.workload.size(); ++p) program_rng_.emplace_back(derive_seed(s.seed, 100 + p));
    routing_.assign(nf_, std::vector<RouteRow>(nn_));
    usage_.assign(nf_, std::vector<double>(nn_, 0.0));
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t j = 0; j < nn_; ++j) usage_[f][j] = s.functions[f].demand.mean_core_ms / 1000.0;
    }
    usage_sum_.assign(nf_, std::vector<double>(nn_, 0.0));
    usage_count_.assign(nf_, std::vector<std::size_t>(nn_, 0));
    ingress_count_.assign(nf_, std::vector<std::size_t>(nn_, 0));
    window_arrivals_.assign(nf_, 0);
    window_records_.assign(nf_, {});
    retry_window_ = s.control.retry_window_s.value_or(s.control.node_period_s);
    for (std::size_t j = 0; j < nn_; ++j) areas_[s.nodes[j].area].push_back(j);
  }

  MetricsReport run() {
    schedule(0.0, Ev::topology_tick);
    schedule(0.0, Ev::community_tick);
    schedule(s_.control.node_period_s, Ev::node_tick);
    start_workload();
    while (!queue_.empty()) {
      const Event e = queue_.top();
      if (e.t > s_.duration_s) break;
      queue_.pop();
      now_ = e.t;
      dispatch(e);
    }
    now_ = s_.duration_s;
    finish();
    return std::move(report_);
  }

 private:
  // ------------------------------------------------------------ plumbing

  void schedule(double t, Ev type, std::uint64_t a = 0, std::uint64_t b = 0) {
    queue_.push({t, priority(type), seq_++, type, a, b});
  }

  void log(nlohmann::json j) {
    j["t"] = now_;
    report_.events.push_back(std::move(j));
  }

  nlohmann::json instance_json(const Instance& in, const char* type) {
    return {{"type", type},
            {"instance", in.id},
            {"function", s_.functions[in.fn].spec.name},
            {"node", s_.nodes[in.node].id},
            {"area", s_.nodes[in.node].area},
            {"kind", placement::to_string(in.kind)}};
  }

  void dispatch(const Event& e) {
    switch (e.type) {
      case Ev::topology_tick:
        topology_tick();
        break;
      case Ev::community_tick:
        community_tick();
        break;
      case Ev::node_tick:
        node_tick();
        break;
      case Ev::program_arrival:
        program_arrival(e.a, e.b);
        break;
      case Ev::user_start:
        user_start(e.a);
        break;
      case Ev::user_request:
        user_request(e.a);
        break;
      case Ev::reach_node:
        reach_node(e.a, e.b);
        break;
      case Ev::instance_done:
        instance_done(e.a, e.b);
        break;
      case Ev::noise_done:
        complete(e.a);
        break;
      case Ev::instance_ready:
        instance_ready(e.a);
        break;
      case Ev::drain_deadline:
        drain_deadline(e.a);
        break;
      case Ev::retry_expired:
        retry_expired(e.a);
        break;
    }
  }

  // ------------------------------------------------------------ workload

  double per_user_rate(const WorkloadProgram& p) const {
    return p.think.closed_loop ? 1.0 / p.think.mean_s : p.think.rate_per_user;
  }

  std::size_t user_node(const User& u, double t) const {
    const auto& p = s_.workload[u.program];
    if (p.kind == WorkloadProgram::Kind::ramp) return p.nodes[u.index % p.nodes.size()];
    const auto& nodes = areas_.at(migration_area(p, u.index, t));
    return nodes[u.index % nodes.size()];
  }

  void start_workload() {
    for (std::size_t p = 0; p < s_.workload.size(); ++p) {
      const auto& w = s_.workload[p];
      auto& rng = program_rng_[p];
      switch (w.kind) {
        case WorkloadProgram::Kind::fixed:
          if (w.rate_rps > 0) {
            const double first = w.poisson ? w.start_s + rng.exponential(1.0 / w.rate_rps) : w.start_s;
            schedule(first, Ev::program_arrival, p);
          }
          break;
        case WorkloadProgram::Kind::trace:
          for (std::size_t k = 0; k < w.trace.size(); ++k) {
            schedule(w.trace[k].first, Ev::program_arrival, p, k + 1);
          }
          break;
        case WorkloadProgram::Kind::ramp: {
          const auto total = static_cast<std::size_t>(w.max_users);
          for (std::size_t k = 0; k < total; ++k) {
            double t = w.start_s;
            if (static_cast<double>(k) + 1 > w.start_users) {
              if (w.add_per_s <= 0) break;
              t += (static_cast<double>(k) + 1 - w.start_users) / w.add_per_s;
            }
            users_.push_back({p, k, false});
            schedule(t, Ev::user_start, users_.size() - 1);
          }
          break;
        }
        case WorkloadProgram::Kind::migration:
          for (std::size_t k = 0; k < w.users; ++k) {
            users_.push_back({p, k, false});
            schedule(w.start_s, Ev::user_start, users_.size() - 1);
          }
          break;
      }
    }
  }

  // Expected arrival rates at t = 0, used to plan the initial deployment.
  placement::Grid nominal_rates() const {
    placement::Grid g(nf_, std::vector<double>(nn_, 0.0));
    for (const auto& w : s_.workload) {
      switch (w.kind) {
        case WorkloadProgram::Kind::fixed:
          if (w.start_s <= 0) g[w.function][w.node] += w.rate_rps;
          break;
        case WorkloadProgram::Kind::ramp: {
          const auto users = ramp_users(w, 0.0);
          for (std::size_t k = 0; k < users; ++k) g[w.function][w.nodes[k % w.nodes.size()]] += per_user_rate(w);
          break;
        }
        case WorkloadProgram::Kind::migration:
          if (w.start_s <= 0) {
            for (std::size_t k = 0; k < w.users; ++k) {
              const auto& nodes = areas_.at(migration_area(w, k, 0.0));
              g[w.function][nodes[k % nodes.size()]] += per_user_rate(w);
            }
          }
          break;
        case WorkloadProgram::Kind::trace:
          break;
      }
    }
    return g;
  }

  // For trace programs `entry` is the 1-based arrival index.
  void program_arrival(std::uint64_t p, std::uint64_t entry) {
    const auto& w = s_.workload[p];
    if (w.kind == WorkloadProgram::Kind::trace) {
      arrive(w.function, w.trace[entry - 1].second, std::nullopt);
      return;
    }
    if (w.end_s >= 0 && now_ > w.end_s) return;
    arrive(w.function, w.node, std::nullopt);
    auto& rng = program_rng_[p];
    const double next = w.poisson ? now_ + rng.exponential(1.0 / w.rate_rps)
                                  : w.start_s + static_cast<double>(++fixed_count_[p]) / w.rate_rps;
    schedule(next, Ev::program_arrival, p);
  }

  void user_start(std::uint64_t u) {
    auto& user = users_[u];
    user.active = true;
    const auto& w = s_.workload[user.program];
    auto& rng = program_rng_[user.program];
    // Random phase so users do not fire in lockstep.
    const double delay = w.think.closed_loop ? rng.exponential(w.think.mean_s)
                                             : rng.exponential(1.0 / w.think.rate_per_user);
    schedule(now_ + delay, Ev::user_request, u);
  }

  void user_request(std::uint64_t u) {
    const auto& user = users_[u];
    const auto& w = s_.workload[user.program];
    arrive(w.function, user_node(user, now_), u);
    if (!w.think.closed_loop) {
      schedule(now_ + program_rng_[user.program].exponential(1.0 / w.think.rate_per_user), Ev::user_request, u);
    }
  }

  void user_done(std::optional<std::uint64_t> u) {
    if (!u) return;
    const auto& user = users_[*u];
    const auto& w = s_.workload[user.program];
    if (!w.think.closed_loop) return;
    schedule(now_ + program_rng_[user.program].exponential(w.think.mean_s), Ev::user_request, *u);
  }

  // ------------------------------------------------------------ requests

  void arrive(std::size_t f, std::size_t ingress, std::optional<std::uint64_t> user) {
    RequestRecord r;
    r.id = report_.requests.size();
    r.function = f;
    r.ingress = ingress;
    r.arrival_s = now_;
    report_.requests.push_back(r);
    request_user_.push_back(user);
    request_delta_.push_back(0.0);
    ++report_.generated;
    ++ingress_count_[f][ingress];
    ++window_arrivals_[f];
    if (!try_dispatch(r.id)) {
      waiting_[ingress].push_back({r.id, now_ + retry_window_});
      schedule(now_ + retry_window_, Ev::retry_expired, r.id);
    }
  }

  // Returns false when the routing row leaves the request unserved.
  bool try_dispatch(std::uint64_t id) {
    auto& r = report_.requests[id];
    const auto& row = routing_[r.function][r.ingress];
    std::vector<double> probs;
    double sum = 0.0;
    for (const auto& e : row) {
      probs.push_back(e.prob);
      sum += e.prob;
    }
    if (sum < 1.0 - 1e-9) probs.push_back(1.0 - sum);  // unserved share
    if (probs.empty()) return false;
    const double scale = sum > 1.0 ? sum : 1.0;
    for (auto& p : probs) p /= scale;
    const std::size_t k = route_request(probs, route_rng_);
    if (k >= row.size()) return false;
    const auto target = row[k];
    auto it = live_.find(key_of(target.kind, r.function, target.node));
    if (it == live_.end()) return false;
    auto& in = instances_[it->second];
    if (in.state != State::ready) {
      // The activation rule makes this unreachable; count it loudly if not.
      ++unready_dispatches_;
      return false;
    }
    r.dispatch_s = now_;
    r.node = static_cast<std::int64_t>(target.node);
    r.kind = target.kind;
    request_delta_[id] = s_.delays(r.ingress, target.node);
    ++in.network_pending;
    schedule(now_ + request_delta_[id] / 1000.0, Ev::reach_node, id, in.id);
    return true;
  }

  void retry_expired(std::uint64_t id) {
    auto& r = report_.requests[id];
    if (r.outcome != Outcome::in_flight || r.dispatch_s >= 0) return;
    auto& list = waiting_[r.ingress];
    auto it = std::find_if(list.begin(), list.end(), [&](const Pending& p) { return p.request == id; });
    if (it == list.end()) return;
    list.erase(it);
    time_out(id);
  }

  void retry_waiting(std::size_t ingress) {
    auto& list = waiting_[ingress];
    std::vector<Pending> keep;
    for (const auto& p : list) {
      if (!try_dispatch(p.request)) keep.push_back(p);
    }
    list = std::move(keep);
  }

  void time_out(std::uint64_t id) {
    auto& r = report_.requests[id];
    r.outcome = Outcome::timeout;
    r.violated = true;
    r.completion_s = now_;
    r.rt_ms = (now_ - r.arrival_s) * 1000.0;
    r.d_ms = r.dispatch_s >= 0 ? request_delta_[id] : 0.0;
    r.e_ms = r.start_s >= 0 ? (now_ - r.start_s) * 1000.0 : 0.0;
    r.q_ms = std::max(0.0, r.rt_ms - r.d_ms - r.e_ms);
    r.rt_ms = r.d_ms + r.q_ms + r.e_ms;
    ++report_.timeouts;
    window_records_[r.function].push_back(id);
    user_done(request_user_[id]);
  }

  void reach_node(std::uint64_t id, std::uint64_t inst) {
    auto& in = instances_[inst];
    --in.network_pending;
    if (in.state == State::removed) {
      time_out(id);
      return;
    }
    in.inflight[id] = now_;
    in.fresh = false;
    const auto& fc = s_.functions[in.fn];
    if (in.ps) {
      double demand = fc.demand.mean_core_ms;
      if (fc.demand.dist == DemandModel::Dist::lognormal) demand = demand_rng_.lognormal(demand, fc.demand.cv);
      report_.requests[id].cpu_core_ms = demand;
      const bool started = in.ps->add(now_, id, demand);
      if (started) report_.requests[id].start_s = now_;
    } else {
      in.gpu->add(now_, id);
    }
    reschedule(in);
  }

  void reschedule(Instance& in) {
    ++in.version;
    const auto next = in.ps ? in.ps->next_completion() : in.gpu->next_completion();
    if (next) schedule(std::max(*next, now_), Ev::instance_done, in.id, in.version);
  }

  void instance_done(std::uint64_t inst, std::uint64_t version) {
    auto& in = instances_[inst];
    if (in.version != version || in.state == State::removed) return;
    const auto done = in.ps ? in.ps->take_completed(now_) : in.gpu->take_completed(now_);
    const auto& fc = s_.functions[in.fn];
    for (const auto& [id, started] : done) {
      auto& r = report_.requests[id];
      r.start_s = started;
      in.qe_sum += (now_ - in.inflight[id]) * 1000.0;
      in.inflight.erase(id);
      ++in.qe_count;
      if (in.ps) {
        usage_sum_[in.fn][in.node] += r.cpu_core_ms / 1000.0;
        ++usage_count_[in.fn][in.node];
      }
      if (fc.noise.mean_ms > 0) {
        const double extra = noise_rng_.lognormal(fc.noise.mean_ms, fc.noise.cv);
        schedule(now_ + extra / 1000.0, Ev::noise_done, id);
      } else {
        complete(id);
      }
    }
    reschedule(in);
    maybe_remove(in);
  }

  void complete(std::uint64_t id) {
    auto& r = report_.requests[id];
    if (r.outcome != Outcome::in_flight) return;
    const auto& fc = s_.functions[r.function];
    r.outcome = Outcome::completed;
    r.completion_s = now_;
    const double rt = (now_ - r.arrival_s) * 1000.0;
    r.d_ms = request_delta_[id];
    r.e_ms = (now_ - r.start_s) * 1000.0;
    r.q_ms = rt - r.d_ms - r.e_ms;
    if (r.q_ms < 0) r.q_ms = 0.0;  // sub-microsecond rounding only
    r.rt_ms = r.d_ms + r.q_ms + r.e_ms;
    r.violated = r.rt_ms > fc.spec.required_rt_ms;
    ++report_.completed;
    window_records_[r.function].push_back(id);
    user_done(request_user_[id]);
  }

  // ------------------------------------------------------------ instances

  std::int64_t max_mc(std::size_t node) const {
    return s_.control.max_mc ? std::min(*s_.control.max_mc, s_.nodes[node].cpu_mc) : s_.nodes[node].cpu_mc;
  }

  // Processor-sharing sizing: 1/QE = A/u - lambda at the set point.
  std::int64_t initial_mc(const Instance& in) const {
    const double u = usage_[in.fn][in.node];
    double mc = static_cast<double>(s_.control.min_mc);
    if (in.planned_rps > 0) mc = 1000.0 * u * (1000.0 / s_.functions[in.fn].setpoint() + in.planned_rps);
    return std::clamp(static_cast<std::int64_t>(std::llround(mc)), in.pi.min_cores, in.pi.max_cores);
  }

  Instance& create_instance(ResourceKind kind, std::size_t f, std::size_t node, double planned_rps,
                            bool warm) {
    const auto& fc = s_.functions[f];
    Instance in;
    in.id = instances_.size();
    in.fn = f;
    in.node = node;
    in.kind = kind;
    in.planned_rps = planned_rps;
    if (kind == ResourceKind::cpu) {
      in.ps = std::make_unique<PsServer>(s_.control.per_request_cap_mc, fc.max_concurrency);
      in.pi.setpoint_ms = fc.setpoint();
      in.pi.prop_gain = s_.control.prop_gain;
      in.pi.int_gain = s_.control.int_gain;
      in.pi.min_cores = s_.control.min_mc;
      in.pi.max_cores = std::max(max_mc(node), s_.control.min_mc);
      in.allocated_mc = initial_mc(in);
    } else {
      in.gpu = std::make_unique<GpuServer>(fc.gpu->service_ms / 1000.0, 0);
    }
    in.state = warm ? State::ready : State::cold;
    instances_.push_back(std::move(in));
    auto& ref = instances_.back();
    live_[key_of(kind, f, node)] = ref.id;
    log(instance_json(ref, "instance_created"));
    if (warm) {
      log(instance_json(ref, "instance_ready"));
    } else {
      schedule(now_ + fc.spec.cold_start_ms / 1000.0, Ev::instance_ready, ref.id);
    }
    return ref;
  }

  void instance_ready(std::uint64_t inst) {
    auto& in = instances_[inst];
    if (in.state != State::cold) return;
    in.state = State::ready;
    log(instance_json(in, "instance_ready"));
    try_swaps();
  }

  void start_drain(Instance& in) {
    const auto& fc = s_.functions[in.fn];
    in.state = State::draining;
    in.to_delete = false;
    auto it = live_.find(key_of(in.kind, in.fn, in.node));
    if (it != live_.end() && it->second == in.id) live_.erase(it);
    log(instance_json(in, "instance_draining"));
    schedule(now_ + fc.spec.graceful_termination_ms / 1000.0, Ev::drain_deadline, in.id);
    maybe_remove(in);
  }

  void maybe_remove(Instance& in) {
    if (in.state != State::draining || in.busy()) return;
    remove_instance(in);
  }

  void remove_instance(Instance& in) {
    in.state = State::removed;
    in.allocated_mc = 0;
    ++in.version;
    log(instance_json(in, "instance_removed"));
    if (in.kind == ResourceKind::gpu) assign_gpu_shares(in.node);
  }

  void drain_deadline(std::uint64_t inst) {
    auto& in = instances_[inst];
    if (in.state != State::draining) return;
    const auto dropped = in.ps ? in.ps->drop_all() : in.gpu->drop_all();
    in.inflight.clear();
    for (auto id : dropped) time_out(id);
    remove_instance(in);
  }

  // ------------------------------------------------------------ allocation

  void resolve_node(std::size_t node) {
    std::vector<nodectl::AllocationRequest> req;
    std::vector<Instance*> who;
    for (auto& in : instances_) {
      if (in.node != node || in.kind != ResourceKind::cpu || in.state == State::removed) continue;
      req.push_back({in.id, in.allocated_mc});
      who.push_back(&in);
    }
    if (req.empty()) return;
    const auto granted = nodectl::resolve_contention(req, s_.nodes[node].cpu_mc);
    std::int64_t total = 0;
    for (std::size_t k = 0; k < who.size(); ++k) {
      who[k]->allocated_mc = granted[k];
      who[k]->ps->set_allocation(now_, static_cast<double>(granted[k]));
      total += granted[k];
      reschedule(*who[k]);
    }
    ++report_.audit.cpu_checks;
    if (total > s_.nodes[node].cpu_mc) ++report_.audit.cpu_violations;
  }

  // Splits the GPU of a node among its GPU instances. Draining instances keep
  // their share; the rest is divided by planned load.
  void assign_gpu_shares(std::size_t node) {
    if (!s_.nodes[node].has_gpu()) return;
    std::int64_t frozen = 0;
    std::vector<Instance*> active;
    for (auto& in : instances_) {
      if (in.node != node || in.kind != ResourceKind::gpu || in.state == State::removed) continue;
      if (in.state == State::draining) {
        frozen += in.allocated_mc;
      } else {
        active.push_back(&in);
      }
    }
    const std::int64_t free = std::max<std::int64_t>(0, s_.nodes[node].gpu_mc - frozen);
    double weight = 0.0;
    for (auto* in : active) weight += in->planned_rps * s_.functions[in->fn].gpu->usage_core_s;
    std::int64_t total = frozen;
    for (auto* in : active) {
      const double w = in->planned_rps * s_.functions[in->fn].gpu->usage_core_s;
      const double frac = weight > 0 ? w / weight : 1.0 / static_cast<double>(active.size());
      in->allocated_mc = static_cast<std::int64_t>(std::floor(static_cast<double>(free) * frac));
      total += in->allocated_mc;
      const auto slots = static_cast<std::size_t>(in->allocated_mc / s_.functions[in->fn].gpu->slot_mc);
      in->gpu->set_concurrency(now_, slots);
      reschedule(*in);
    }
    ++report_.audit.gpu_checks;
    if (total > s_.nodes[node].gpu_mc) ++report_.audit.gpu_violations;
  }

  // ------------------------------------------------------------ control loops

  void node_tick() {
    const double period = s_.control.node_period_s;
    for (std::size_t node = 0; node < nn_; ++node) {
      if (s_.control.node_control) {
        for (auto& in : instances_) {
          if (in.node != node || in.kind != ResourceKind::cpu || in.state != State::ready) continue;
          std::optional<double> qe;
          if (in.qe_count > 0) {
            qe = in.qe_sum / static_cast<double>(in.qe_count);
          } else if (!in.inflight.empty()) {
            // Nothing finished: the oldest request's age bounds QE from below.
            double oldest = now_;
            for (const auto& [id, reached] : in.inflight) oldest = std::min(oldest, reached);
            qe = (now_ - oldest) * 1000.0;
          }
          const auto step = nodectl::compute_instance_cores(in.pi, qe, in.allocated_mc);
          in.pi = step.state;
          in.allocated_mc = step.desired_cores;
        }
      }
      resolve_node(node);
      if (s_.nodes[node].has_gpu()) {
        std::int64_t total = 0;
        for (const auto& in : instances_) {
          if (in.node == node && in.kind == ResourceKind::gpu && in.state != State::removed) total += in.allocated_mc;
        }
        ++report_.audit.gpu_checks;
        if (total > s_.nodes[node].gpu_mc) ++report_.audit.gpu_violations;
      }
    }
    for (auto& in : instances_) {
      in.qe_sum = 0.0;
      in.qe_count = 0;
    }
    const double alpha = s_.control.usage_ewma_alpha;
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t j = 0; j < nn_; ++j) {
        if (usage_count_[f][j] > 0) {
          const double measured = usage_sum_[f][j] / static_cast<double>(usage_count_[f][j]);
          usage_[f][j] = alpha * measured + (1.0 - alpha) * usage_[f][j];
        }
        usage_sum_[f][j] = 0.0;
        usage_count_[f][j] = 0;
      }
    }
    record_window(period);
    schedule(now_ + period, Ev::node_tick);
  }

  void record_window(double period) {
    for (std::size_t f = 0; f < nf_; ++f) {
      std::vector<RequestRecord> recs;
      std::size_t gpu_done = 0;
      for (auto id : window_records_[f]) {
        recs.push_back(report_.requests[id]);
        if (recs.back().outcome == Outcome::completed && recs.back().kind == ResourceKind::gpu) ++gpu_done;
      }
      const auto w = collect_window(recs, period);
      WindowRow row;
      row.t_end = now_;
      row.function = f;
      row.arrivals = window_arrivals_[f];
      row.completions = w.completions;
      row.violations = w.violations;
      row.mean_rt_ms = w.mean_rt_ms.value_or(0.0);
      row.network_pct = w.rt_sum_ms > 0 ? 100.0 * w.network_ms / w.rt_sum_ms : 0.0;
      row.gpu_completions = gpu_done;
      for (const auto& in : instances_) {
        if (in.fn != f || in.state == State::removed) continue;
        if (in.kind == ResourceKind::cpu) {
          row.allocated_mc += in.allocated_mc;
          ++row.cpu_instances;
        } else {
          ++row.gpu_instances;
        }
      }
      report_.windows.push_back(row);
      window_records_[f].clear();
      window_arrivals_[f] = 0;
    }
  }

  void topology_tick() {
    auto params = s_.control.community;
    params.rng_seed = derive_seed(s_.seed, 1000);
    communities_ = topology::partition(s_.nodes, s_.delays, params);
    pending_.assign(communities_.size(), std::nullopt);
    for (auto& in : instances_) in.to_delete = false;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : communities_) {
      nlohmann::json members = nlohmann::json::array();
      for (auto j : c.members) members.push_back(s_.nodes[j].id);
      list.push_back(members);
    }
    log({{"type", "partition"}, {"communities", list}});
    schedule(now_ + s_.control.topology_period_s, Ev::topology_tick);
  }

  void community_tick() {
    const bool initial = now_ == 0.0;
    placement::Grid rates;
    if (initial) {
      rates = nominal_rates();
    } else {
      const double elapsed = now_ - last_community_;
      rates.assign(nf_, std::vector<double>(nn_, 0.0));
      for (std::size_t f = 0; f < nf_; ++f) {
        for (std::size_t j = 0; j < nn_; ++j) rates[f][j] = static_cast<double>(ingress_count_[f][j]) / elapsed;
      }
    }
    for (auto& row : ingress_count_) std::fill(row.begin(), row.end(), 0);
    last_community_ = now_;
    if (initial || s_.control.community_control) {
      for (std::size_t c = 0; c < communities_.size(); ++c) plan_community(c, rates, initial);
    }
    try_swaps();
    schedule(now_ + s_.control.community_period_s, Ev::community_tick);
  }

  placement::PlacementConfig placement_config() const {
    placement::PlacementConfig cfg;
    cfg.epsilon = s_.control.epsilon;
    cfg.cpu_utilization_target = s_.control.cpu_utilization_target;
    cfg.gpu_utilization_target = s_.control.gpu_utilization_target;
    return cfg;
  }

  void plan_community(std::size_t c, const placement::Grid& rates, bool warm) {
    const auto& members = communities_[c].members;
    const std::size_t m = members.size();
    placement::CommunityState st;
    for (auto j : members) st.nodes.push_back(s_.nodes[j]);
    st.delays = s_.delays.submatrix(members);
    st.workload.assign(nf_, std::vector<double>(m, 0.0));
    st.cpu_usage.assign(nf_, std::vector<double>(m, 0.0));
    st.gpu_usage.assign(nf_, std::vector<double>(m, 0.0));
    for (std::size_t f = 0; f < nf_; ++f) {
      st.functions.push_back(s_.functions[f].spec);
      for (std::size_t k = 0; k < m; ++k) {
        st.workload[f][k] = rates[f][members[k]];
        st.cpu_usage[f][k] = usage_[f][members[k]];
        if (s_.functions[f].gpu) st.gpu_usage[f][k] = s_.functions[f].gpu->usage_core_s;
      }
    }
    placement::Deployed old_gpu(nf_, std::vector<int>(m, 0)), old_cpu(nf_, std::vector<int>(m, 0));
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t k = 0; k < m; ++k) {
        for (auto kind : {ResourceKind::gpu, ResourceKind::cpu}) {
          auto it = live_.find(key_of(kind, f, members[k]));
          if (it == live_.end() || instances_[it->second].to_delete) continue;
          (kind == ResourceKind::gpu ? old_gpu : old_cpu)[f][k] = 1;
        }
      }
    }
    const auto cfg = placement_config();
    placement::TwoStepResult result;
    try {
      result = placement::solve_two_step(st, old_gpu, old_cpu, cfg);
    } catch (const placement::InfeasibleError& e) {
      nlohmann::json ids = nlohmann::json::array();
      for (auto j : members) ids.push_back(s_.nodes[j].id);
      log({{"type", "infeasible"},
           {"community", ids},
           {"pass", placement::to_string(e.pass())},
           {"constraint_class", e.constraint_class()}});
      return;
    }

    nlohmann::json plan = placement::to_json(st, result);
    plan["type"] = "placement";
    nlohmann::json ids = nlohmann::json::array();
    for (auto j : members) ids.push_back(s_.nodes[j].id);
    plan["community"] = ids;
    log(std::move(plan));

    PendingPlan pp;
    pp.ingress = members;
    pp.rows.assign(nf_, std::vector<RouteRow>(m));
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t i = 0; i < m; ++i) {
        const double served = result.gpu.served_fraction[f][i];
        for (std::size_t j = 0; j < m; ++j) {
          const double g = result.gpu.routing[f][i][j];
          if (g > 0) pp.rows[f][i].push_back({ResourceKind::gpu, members[j], g});
        }
        for (std::size_t j = 0; j < m; ++j) {
          const double x = result.cpu.routing[f][i][j] * (1.0 - std::min(served, 1.0));
          if (x > 0) pp.rows[f][i].push_back({ResourceKind::cpu, members[j], x});
        }
      }
    }
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t j = 0; j < m; ++j) {
        double gpu_rps = 0.0, cpu_rps = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          gpu_rps += result.gpu.routing[f][i][j] * st.workload[f][i];
          cpu_rps += result.cpu.routing[f][i][j] * result.residual[f][i];
        }
        if (result.gpu.deployed[f][j]) pp.planned[key_of(ResourceKind::gpu, f, members[j])] = gpu_rps;
        if (result.cpu.deployed[f][j]) pp.planned[key_of(ResourceKind::cpu, f, members[j])] = cpu_rps;
      }
    }
    pp.activation.time_s = now_;
    pp.activation.nodes = members;
    pp.activation.state = st;
    pp.activation.result = result;
    pp.activation.config = cfg;

    // Target deployment: create what is missing, mark what is no longer wanted.
    std::set<std::size_t> touched_cpu, touched_gpu;
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t node = members[k];
        for (auto kind : {ResourceKind::gpu, ResourceKind::cpu}) {
          const bool want = (kind == ResourceKind::gpu ? result.gpu.deployed : result.cpu.deployed)[f][k] != 0;
          auto it = live_.find(key_of(kind, f, node));
          if (want && it == live_.end()) {
            create_instance(kind, f, node, pp.planned[key_of(kind, f, node)], warm);
            (kind == ResourceKind::gpu ? touched_gpu : touched_cpu).insert(node);
          } else if (it != live_.end()) {
            instances_[it->second].to_delete = !want;
          }
        }
      }
    }
    for (auto node : touched_cpu) resolve_node(node);
    for (auto node : touched_gpu) assign_gpu_shares(node);
    pending_[c] = std::move(pp);
  }

  void try_swaps() {
    for (std::size_t c = 0; c < pending_.size(); ++c) {
      if (!pending_[c]) continue;
      auto& pp = *pending_[c];
      bool ready = true;
      for (std::size_t f = 0; f < nf_ && ready; ++f) {
        for (const auto& row : pp.rows[f]) {
          for (const auto& e : row) {
            auto it = live_.find(key_of(e.kind, f, e.node));
            if (it == live_.end() || instances_[it->second].state != State::ready) ready = false;
          }
        }
      }
      if (!ready) continue;
      activate(pp);
      pending_[c].reset();
    }
  }

  void activate(PendingPlan& pp) {
    for (std::size_t f = 0; f < nf_; ++f) {
      for (std::size_t k = 0; k < pp.ingress.size(); ++k) routing_[f][pp.ingress[k]] = pp.rows[f][k];
    }
    std::set<std::size_t> gpu_nodes, cpu_nodes;
    for (auto node : pp.ingress) {
      for (auto& in : instances_) {
        if (in.node != node || in.state == State::removed || in.state == State::draining) continue;
        auto it = pp.planned.find(key_of(in.kind, in.fn, in.node));
        in.planned_rps = it == pp.planned.end() ? 0.0 : it->second;
        if (in.kind == ResourceKind::gpu) gpu_nodes.insert(node);
        if (in.kind == ResourceKind::cpu && in.fresh) {
          in.allocated_mc = initial_mc(in);
          cpu_nodes.insert(node);
        }
      }
    }
    std::vector<Instance*> drains;
    for (auto& in : instances_) {
      if (in.to_delete && in.state != State::removed && in.state != State::draining &&
          std::find(pp.ingress.begin(), pp.ingress.end(), in.node) != pp.ingress.end()) {
        drains.push_back(&in);
      }
    }
    for (auto* in : drains) {
      if (in->kind == ResourceKind::gpu) gpu_nodes.insert(in->node);
      start_drain(*in);
    }
    for (auto node : cpu_nodes) resolve_node(node);
    for (auto node : gpu_nodes) assign_gpu_shares(node);
    nlohmann::json ids = nlohmann::json::array();
    for (auto j : pp.ingress) ids.push_back(s_.nodes[j].id);
    log({{"type", "routing_swap"}, {"community", ids}, {"planned_at", pp.activation.time_s}});
    report_.activations.push_back(std::move(pp.activation));
    for (auto node : pp.ingress) retry_waiting(node);
  }

  void finish() {
    report_.in_flight = 0;
    for (const auto& r : report_.requests) {
      if (r.outcome == Outcome::in_flight) ++report_.in_flight;
    }
    if (unready_dispatches_ > 0) {
      log({{"type", "error"}, {"message", "dispatch to a non-ready instance"}, {"count", unready_dispatches_}});
    }
  }

  const Scenario& s_;
  std::size_t nf_, nn_;
  Rng route_rng_, demand_rng_, noise_rng_;
  std::vector<Rng> program_rng_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double last_community_ = 0.0;
  double retry_window_ = 0.0;

  MetricsReport report_;
  std::vector<std::optional<std::uint64_t>> request_user_;
  std::vector<double> request_delta_;
  std::vector<Instance> instances_;
  std::map<Key, std::uint64_t> live_;
  std::vector<std::vector<RouteRow>> routing_;
  std::vector<topology::Community> communities_;
  std::vector<std::optional<PendingPlan>> pending_;
  std::map<std::size_t, std::vector<Pending>> waiting_;
  std::map<std::string, std::vector<std::size_t>> areas_;
  std::vector<User> users_;
  std::map<std::size_t, std::uint64_t> fixed_count_;

  placement::Grid usage_;
  std::vector<std::vector<double>> usage_sum_;
  std::vector<std::vector<std::size_t>> usage_count_;
  std::vector<std::vector<std::size_t>> ingress_count_;
  std::vector<std::size_t> window_arrivals_;
  std::vector<std::vector<std::uint64_t>> window_records_;
  std::uint64_t unready_dispatches_ = 0;
};

}  // namespace

MetricsReport run(const Scenario& scenario) {
  const auto problems = validate_scenario(scenario);
  if (!problems.empty()) {
    std::string msg = "invalid scenario:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
  return Engine(scenario).run();
}

}  // namespace mecctl::sim
