#pragma once

// Discrete-event simulation of a set of edge nodes running the three control
// loops: topology partitioning, community placement and node-level vertical
// scaling. Time is continuous (seconds); events at equal times run in the
// order they were scheduled.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "mecctl/function_spec.hpp"
#include "mecctl/placement.hpp"
#include "mecctl/random.hpp"
#include "mecctl/topology.hpp"

namespace mecctl::sim {

// ---------------------------------------------------------------- scenario

struct DemandModel {
  enum class Dist { constant, lognormal };
  Dist dist = Dist::constant;
  double mean_core_ms = 10.0;
  double cv = 0.0;
};

// Wall time added after the CPU work finishes (e.g. a database round trip).
// Consumes no CPU.
struct NoiseModel {
  double mean_ms = 0.0;
  double cv = 0.0;
};

struct GpuModel {
  double service_ms = 100.0;      // per request, fixed
  std::int64_t slot_mc = 100;     // GPU millicores per concurrent request
  double usage_core_s = 0.1;      // planning usage per request
};

struct FunctionConfig {
  FunctionSpec spec;
  DemandModel demand;
  NoiseModel noise;
  std::optional<GpuModel> gpu;
  std::optional<double> setpoint_ms;  // default: required_rt / 2
  std::size_t max_concurrency = 0;    // per CPU instance; 0 = unlimited

  double setpoint() const { return setpoint_ms ? *setpoint_ms : spec.required_rt_ms / 2.0; }
};

struct ThinkModel {
  bool closed_loop = true;         // closed: wait for the response, then think
  double mean_s = 1.0;             // closed loop: exponential think time
  double rate_per_user = 1.0;      // open loop: Poisson requests/s per user
};

struct Move {
  std::string to_area;
  double start_s = 0.0;
  double window_s = 0.0;
};

struct WorkloadProgram {
  enum class Kind { fixed, ramp, migration, trace };
  Kind kind = Kind::fixed;
  std::size_t function = 0;

  // fixed
  std::size_t node = 0;
  double rate_rps = 0.0;
  bool poisson = true;  // false: evenly spaced arrivals
  double start_s = 0.0;
  double end_s = -1.0;  // < 0: until the horizon

  // ramp and migration
  ThinkModel think;
  std::vector<std::size_t> nodes;  // ramp: ingress nodes, users assigned round robin
  double start_users = 0.0;
  double add_per_s = 0.0;
  double max_users = 0.0;
  std::string from_area;  // migration: users start here
  std::size_t users = 0;
  std::vector<Move> moves;

  // trace: explicit arrivals
  std::vector<std::pair<double, std::size_t>> trace;  // (time s, node)
};

struct ControlConfig {
  double node_period_s = 5.0;
  double community_period_s = 60.0;
  double topology_period_s = 600.0;
  double epsilon = 0.05;
  double prop_gain = 50.0;
  double int_gain = 100.0;
  std::int64_t min_mc = 50;
  std::optional<std::int64_t> max_mc;  // default: node capacity
  topology::CommunityParams community{.max_community_size = 10, .max_delay_ms = 100.0};
  double cpu_utilization_target = 0.8;
  double gpu_utilization_target = 1.0;
  double per_request_cap_mc = 1000.0;
  double usage_ewma_alpha = 0.3;
  std::optional<double> retry_window_s;  // default: node period
  bool node_control = true;              // false: allocations stay fixed
  bool community_control = true;         // false: the initial placement stays
};

struct Scenario {
  int format_version = 1;
  std::string name;
  std::uint64_t seed = 1;
  double duration_s = 60.0;
  double warmup_s = 0.0;
  std::vector<topology::NodeDescriptor> nodes;
  topology::DelayMatrix delays;
  std::vector<FunctionConfig> functions;
  std::vector<WorkloadProgram> workload;
  ControlConfig control;
};

// Problems with field paths; empty when the scenario can run.
std::vector<std::string> validate_scenario(const Scenario& scenario);
// Non-fatal observations, e.g. a GPU function without any GPU node.
std::vector<std::string> scenario_warnings(const Scenario& scenario);

// ---------------------------------------------------------------- building blocks

// Samples an index with probability probs[k]. The probabilities must sum to 1
// within 1e-6; throws std::invalid_argument otherwise.
std::size_t route_request(std::span<const double> probs, Rng& rng);

// Egalitarian processor sharing. Each request in service progresses at
// min(allocation / n, cap) millicores; demand is in core-milliseconds, so a
// request at r millicores finishes r core-ms per simulated second.
class PsServer {
 public:
  PsServer(double cap_mc, std::size_t max_concurrency = 0)
      : cap_mc_(cap_mc), limit_(max_concurrency) {}

  // Brings progress up to `now`.
  void advance(double now);
  void set_allocation(double now, double allocation_mc);
  // Adds a request; returns true if it entered service immediately.
  bool add(double now, std::uint64_t id, double demand_core_ms);
  // Removes every request whose demand is met. Returns (id, service start)
  // in completion order; queued heads then enter service.
  std::vector<std::pair<std::uint64_t, double>> take_completed(double now);
  // Earliest completion time under the current allocation; nullopt if none.
  std::optional<double> next_completion() const;
  std::vector<std::uint64_t> drop_all();

  std::size_t in_service() const { return active_.size(); }
  std::size_t queued() const { return queue_.size(); }
  double allocation() const { return allocation_mc_; }
  double rate() const;

 private:
  struct Job {
    std::uint64_t id;
    double remaining;
    double started;
  };
  double cap_mc_;
  std::size_t limit_;
  double allocation_mc_ = 0.0;
  double clock_ = 0.0;
  std::vector<Job> active_;
  std::deque<std::pair<std::uint64_t, double>> queue_;  // (id, demand)
};

// Fixed service time with a concurrency limit and a FIFO queue.
class GpuServer {
 public:
  GpuServer(double service_s, std::size_t concurrency)
      : service_s_(service_s), concurrency_(concurrency) {}

  void set_concurrency(double now, std::size_t concurrency);
  void add(double now, std::uint64_t id);
  std::vector<std::pair<std::uint64_t, double>> take_completed(double now);
  std::optional<double> next_completion() const;
  std::vector<std::uint64_t> drop_all();
  std::size_t in_service() const { return active_.size(); }
  std::size_t queued() const { return queue_.size(); }
  std::size_t concurrency() const { return concurrency_; }

 private:
  void fill(double now);
  struct Job {
    std::uint64_t id;
    double started;
  };
  double service_s_;
  std::size_t concurrency_;
  std::vector<Job> active_;
  std::deque<std::uint64_t> queue_;
};

// Users active at time t for a ramp program.
std::size_t ramp_users(const WorkloadProgram& program, double t);

// Area of user k at time t for a migration program: the user moves at
// start + window * (k + 1) / users of each move.
std::string migration_area(const WorkloadProgram& program, std::size_t user, double t);

// ---------------------------------------------------------------- records

enum class Outcome { completed, timeout, in_flight };
const char* to_string(Outcome outcome);

struct RequestRecord {
  std::uint64_t id = 0;
  std::size_t function = 0;
  std::size_t ingress = 0;
  std::int64_t node = -1;  // executing node; -1 if never dispatched
  placement::ResourceKind kind = placement::ResourceKind::cpu;
  Outcome outcome = Outcome::in_flight;
  double arrival_s = 0.0;
  double dispatch_s = -1.0;
  double start_s = -1.0;
  double completion_s = -1.0;
  double d_ms = 0.0;
  double q_ms = 0.0;
  double e_ms = 0.0;
  double rt_ms = 0.0;
  double cpu_core_ms = 0.0;  // CPU work consumed
  bool violated = false;
};

struct WindowStats {
  std::size_t completions = 0;
  double lambda_rps = 0.0;                 // completions per second
  std::optional<double> mean_qe_ms;        // empty window -> nullopt
  std::optional<double> mean_rt_ms;
  std::size_t violations = 0;
  double network_ms = 0.0;
  double rt_sum_ms = 0.0;
  std::optional<double> p99_rt_ms;
};

// Window statistics over completed records. QE = Q + E.
WindowStats collect_window(std::span<const RequestRecord> records, double window_s);

// Nearest-rank percentile (q in (0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

struct WindowRow {
  double t_end = 0.0;
  std::size_t function = 0;
  std::size_t arrivals = 0;
  std::size_t completions = 0;
  std::size_t violations = 0;
  double mean_rt_ms = 0.0;
  double network_pct = 0.0;
  std::int64_t allocated_mc = 0;
  std::size_t cpu_instances = 0;
  std::size_t gpu_instances = 0;
  std::size_t gpu_completions = 0;
};

struct ActivatedPlacement {
  double time_s = 0.0;
  std::vector<std::size_t> nodes;  // global indices of the community
  placement::CommunityState state;
  placement::TwoStepResult result;
  placement::PlacementConfig config;
};

struct CapacityAudit {
  std::uint64_t cpu_checks = 0;
  std::uint64_t cpu_violations = 0;
  std::uint64_t gpu_checks = 0;
  std::uint64_t gpu_violations = 0;
};

struct MetricsReport {
  std::vector<RequestRecord> requests;  // by id
  std::vector<WindowRow> windows;
  std::vector<nlohmann::json> events;   // each has "t" and "type"
  std::vector<ActivatedPlacement> activations;
  CapacityAudit audit;
  std::uint64_t generated = 0;
  std::uint64_t completed = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t in_flight = 0;
};

MetricsReport run(const Scenario& scenario);

}  // namespace mecctl::sim
