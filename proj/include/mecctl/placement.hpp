#pragma once

// Community-level placement and routing. Each resource kind is solved in two
// steps: minimize the network delay, then minimize instance churn among the
// placements whose delay stays within (1 + epsilon) of the step-one optimum.
// GPUs are planned first; the CPU pass sees only the workload the GPUs do not
// absorb.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mecctl/function_spec.hpp"
#include "mecctl/milp.hpp"
#include "mecctl/topology.hpp"

namespace mecctl::placement {

enum class ResourceKind { cpu, gpu };
const char* to_string(ResourceKind kind);

using Grid = std::vector<std::vector<double>>;      // [function][node]
using Deployed = std::vector<std::vector<int>>;     // c[function][node], 0 or 1
using Routing = std::vector<Grid>;                  // x[function][source][target]

inline constexpr std::size_t kNoVar = std::numeric_limits<std::size_t>::max();

// Everything a community controller knows at solve time. Node indices are
// local to the community.
struct CommunityState {
  std::vector<topology::NodeDescriptor> nodes;
  topology::DelayMatrix delays;
  std::vector<FunctionSpec> functions;
  Grid workload;   // lambda[f][i], requests/s arriving at node i
  Grid cpu_usage;  // u[f][j], core-seconds per request on node j
  Grid gpu_usage;  // GPU core-seconds per request; only read for GPU-capable f
};

std::vector<std::string> validate_state(const CommunityState& state);

enum class Backend { branch_and_bound, brute_force };

struct PlacementConfig {
  double epsilon = 0.05;
  // Fraction of a node's capacity the planner may fill.
  double cpu_utilization_target = 0.8;
  double gpu_utilization_target = 1.0;
  milp::SolverConfig solver;
  Backend backend = Backend::branch_and_bound;
};

enum class Objective { none, delay, served_load };

struct ModelOptions {
  Objective objective = Objective::delay;
  bool require_instance = false;           // sum_j c[f][j] >= 1 for every function
  std::optional<double> min_served_load;   // sum x*lambda >= value
  bool relax_capacity = false;
  bool relax_memory = false;
};

// A model plus the variable indices it was built with. Absent variables hold
// kNoVar.
struct PassModel {
  ResourceKind kind = ResourceKind::cpu;
  milp::Model model;
  std::vector<std::size_t> functions;  // functions taking part in the pass
  std::vector<std::size_t> nodes;      // candidate target nodes
  std::vector<std::vector<std::vector<std::size_t>>> x;
  std::vector<std::vector<std::size_t>> c;
  // Disruption step only.
  std::vector<std::size_t> mg, z;
  std::vector<std::vector<std::size_t>> dl_select, cr_select;  // one-hot over 0..|nodes|
};

PassModel build_delay_min_model(const CommunityState& state, ResourceKind kind,
                                 const PlacementConfig& config, const ModelOptions& options);

// Step-one constraints plus the delay band and the churn objective. c_old may
// be empty (nothing deployed).
PassModel build_disruption_min_model(const CommunityState& state, ResourceKind kind,
                                     const PlacementConfig& config, const ModelOptions& options,
                                     double o_best, const Deployed& c_old);

struct PlacementSolution {
  ResourceKind kind = ResourceKind::cpu;
  Deployed deployed;
  Routing routing;
  Grid served_fraction;        // sum_j x[f][i][j]
  double o_best = 0.0;         // step-one delay optimum, ms*req/s
  double net_delay = 0.0;      // delay of the returned routing
  double served_load = 0.0;    // sum x*lambda, req/s
  double disruption_objective = 0.0;
  bool step2_fallback = false;  // step two failed; step-one placement kept
  std::size_t bb_nodes = 0;
};

// Network delay of a routing: sum over f, i, j of x * lambda * delta.
double evaluate_net_delay(const CommunityState& state, const Routing& routing);

class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(ResourceKind pass, std::string constraint_class, const std::string& what)
      : std::runtime_error(what), pass_(pass), constraint_class_(std::move(constraint_class)) {}
  ResourceKind pass() const { return pass_; }
  const std::string& constraint_class() const { return constraint_class_; }

 private:
  ResourceKind pass_;
  std::string constraint_class_;
};

// Both steps for one resource kind. Throws InfeasibleError when the CPU pass
// cannot route its workload.
PlacementSolution solve_pass(const CommunityState& state, ResourceKind kind,
                             const Deployed& c_old, const PlacementConfig& config);

// lambda'[f][i] = lambda[f][i] * (1 - served_fraction[f][i]).
Grid residual_workload(const Grid& workload, const PlacementSolution& gpu);

struct FunctionPlan {
  int creations = 0;
  int deletions = 0;
  int migrations = 0;
  std::vector<std::size_t> create_on;
  std::vector<std::size_t> delete_from;
};

struct DeploymentPlan {
  ResourceKind kind = ResourceKind::cpu;
  std::vector<FunctionPlan> functions;
};

DeploymentPlan diff_placements(const Deployed& old_deployed, const Deployed& new_deployed,
                               ResourceKind kind);

struct TwoStepResult {
  PlacementSolution gpu;
  PlacementSolution cpu;
  DeploymentPlan gpu_plan;
  DeploymentPlan cpu_plan;
  Grid residual;
};

TwoStepResult solve_two_step(const CommunityState& state, const Deployed& previous_gpu,
                             const Deployed& previous_cpu, const PlacementConfig& config);

// JSON report; numbers are rounded to 1e-9 so reports diff cleanly.
nlohmann::json to_json(const CommunityState& state, const TwoStepResult& result);

}  // namespace mecctl::placement
