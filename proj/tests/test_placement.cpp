#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "instances.hpp"
#include "mecctl/placement.hpp"
#include "placement_oracle.hpp"

using namespace mecctl::placement;
using mecctl::FunctionSpec;
using mecctl::topology::DelayMatrix;
using mecctl::topology::NodeDescriptor;

namespace {

NodeDescriptor node(const char* id, std::int64_t cpu_mc, double mem, std::int64_t gpu_mc = 0,
                    double gpu_mem = 0) {
  NodeDescriptor n;
  n.id = id;
  n.cpu_mc = cpu_mc;
  n.cpu_memory_mb = mem;
  n.gpu_mc = gpu_mc;
  n.gpu_memory_mb = gpu_mem;
  return n;
}

FunctionSpec function(const char* name, double mem, double phi, std::optional<double> gpu_mem = {}) {
  FunctionSpec f;
  f.name = name;
  f.cpu_memory_mb = mem;
  f.gpu_memory_mb = gpu_mem;
  f.max_net_delay_ms = phi;
  f.required_rt_ms = 200;
  return f;
}

CommunityState community(std::vector<NodeDescriptor> nodes, DelayMatrix d,
                         std::vector<FunctionSpec> fs, Grid workload, double u = 0.1,
                         double u_gpu = 0.1) {
  CommunityState s;
  s.nodes = std::move(nodes);
  s.delays = std::move(d);
  s.functions = std::move(fs);
  s.workload = std::move(workload);
  s.cpu_usage.assign(s.functions.size(), std::vector<double>(s.nodes.size(), u));
  s.gpu_usage.assign(s.functions.size(), std::vector<double>(s.nodes.size(), u_gpu));
  return s;
}

double row_sum(const std::vector<double>& row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s;
}

}  // namespace

TEST_CASE("delay min: single node with ample capacity") {
  auto s = community({node("a", 4000, 1000)}, DelayMatrix(1), {function("f", 100, 50)}, {{10.0}});
  const auto sol = solve_pass(s, ResourceKind::cpu, {}, {});
  CHECK(sol.deployed[0][0] == 1);
  CHECK(sol.routing[0][0][0] == 1.0);
  CHECK(sol.o_best == 0.0);
  CHECK(sol.net_delay == 0.0);
}

TEST_CASE("delay min: load at one node stays local") {
  DelayMatrix d(2, 10.0);
  d(0, 0) = d(1, 1) = 0.0;
  auto s = community({node("a", 4000, 1000), node("b", 4000, 1000)}, d, {function("f", 100, 50)},
                     {{10.0, 0.0}});
  const auto sol = solve_pass(s, ResourceKind::cpu, {}, {});
  CHECK(sol.o_best == 0.0);
  CHECK(sol.routing[0][0][0] == 1.0);
  CHECK(sol.net_delay == 0.0);
}

TEST_CASE("delay min: forced offload matches brute force and the reference") {
  DelayMatrix d(std::vector<std::vector<double>>{{0, 10, 30}, {12, 0, 15}, {30, 14, 0}});
  // node a holds only 800 mc at 80%: 1000 mc of demand per function must spill.
  auto s = community({node("a", 1000, 400), node("b", 1500, 400), node("c", 3000, 400)}, d,
                     {function("f", 250, 40), function("g", 150, 40)}, {{10.0, 2.0, 0.0}, {4.0, 0.0, 3.0}});
  PlacementConfig cfg;
  ModelOptions opt;
  opt.require_instance = true;
  const auto pm = build_delay_min_model(s, ResourceKind::cpu, cfg, opt);
  const auto bb = mecctl::milp::branch_and_bound(pm.model);
  const auto bf = mecctl::milp::brute_force_solve(pm.model);
  REQUIRE(bb.status == mecctl::milp::Status::optimal);
  REQUIRE(bf.status == mecctl::milp::Status::optimal);
  CHECK(std::fabs(bb.objective - bf.objective) <= 1e-6 * std::max(1.0, std::fabs(bf.objective)));
  const auto ref = oracle::enumerate(s, ResourceKind::cpu, {}, cfg.epsilon);
  REQUIRE(ref.feasible);
  CHECK(std::fabs(bb.objective - ref.o_best) <= 1e-6 * std::max(1.0, ref.o_best));
  CHECK(ref.o_best > 0.0);
}

TEST_CASE("disruption: unchanged optimum costs nothing") {
  DelayMatrix d(3, 20.0);
  for (int i = 0; i < 3; ++i) d(i, i) = 0;
  auto s = community({node("a", 4000, 1000), node("b", 4000, 1000), node("c", 4000, 1000)}, d,
                     {function("f", 100, 50)}, {{8.0, 0.0, 0.0}});
  const Deployed old{{1, 0, 0}};
  const auto sol = solve_pass(s, ResourceKind::cpu, old, {});
  CHECK(sol.deployed == old);
  CHECK(sol.disruption_objective == doctest::Approx(0.0));
  const auto plan = diff_placements(old, sol.deployed, ResourceKind::cpu);
  CHECK(plan.functions[0].creations == 0);
  CHECK(plan.functions[0].deletions == 0);
  CHECK(plan.functions[0].migrations == 0);
}

TEST_CASE("disruption: forced move counts one migration") {
  DelayMatrix d(3, 100.0);
  for (int i = 0; i < 3; ++i) d(i, i) = 0;
  // Node a can no longer fit the function; load sits at b.
  auto s = community({node("a", 4000, 50), node("b", 4000, 1000), node("c", 4000, 1000)}, d,
                     {function("f", 100, 50)}, {{0.0, 8.0, 0.0}});
  const Deployed old{{1, 0, 0}};
  const auto sol = solve_pass(s, ResourceKind::cpu, old, {});
  CHECK(sol.deployed == Deployed{{0, 1, 0}});
  const auto plan = diff_placements(old, sol.deployed, ResourceKind::cpu);
  CHECK(plan.functions[0].deletions == 1);
  CHECK(plan.functions[0].creations == 1);
  CHECK(plan.functions[0].migrations == 1);
  // MG + 1/(DL+2) - 1/(CR+2) = 1 + 1/3 - 1/3
  CHECK(sol.disruption_objective == doctest::Approx(1.0));
}

TEST_CASE("disruption: randomized instances match the reference churn") {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto s = instances::random_community(rng, 1 + rng() % 3, 1 + rng() % 2, trial % 3 == 0);
    const auto old = instances::random_deployed(rng, s);
    for (auto kind : {ResourceKind::gpu, ResourceKind::cpu}) {
      PlacementConfig cfg;
      const auto ref = oracle::enumerate(s, kind, old, cfg.epsilon);
      if (!ref.feasible) {
        if (kind == ResourceKind::cpu) CHECK_THROWS_AS(solve_pass(s, kind, old, cfg), InfeasibleError);
        continue;
      }
      const auto sol = solve_pass(s, kind, old, cfg);
      const auto p = oracle::pass_members(s, kind);
      if (p.functions.empty() || p.nodes.empty()) continue;
      ++checked;
      CHECK_FALSE(sol.step2_fallback);
      CHECK(std::fabs(sol.o_best - ref.o_best) <= 1e-6 * std::max(1.0, ref.o_best));
      CHECK(sol.net_delay <= sol.o_best * (1 + cfg.epsilon) + 1e-6);
      const auto ch = oracle::churn(p, old, sol.deployed);
      CHECK(ch.objective == doctest::Approx(ref.churn_best).epsilon(1e-9));
      CHECK(std::find(ref.optimal_mg.begin(), ref.optimal_mg.end(), ch.mg) != ref.optimal_mg.end());
      CHECK(oracle::check_solution(s, sol, cfg.cpu_utilization_target, cfg.gpu_utilization_target).total() == 0);
    }
  }
  CHECK(checked > 40);
}

TEST_CASE("two step: no GPU nodes leaves the CPU pass the full workload") {
  DelayMatrix d(2, 5.0);
  d(0, 0) = d(1, 1) = 0;
  auto s = community({node("a", 4000, 1000), node("b", 4000, 1000)}, d,
                     {function("f", 100, 50, 200.0)}, {{6.0, 3.0}});
  const auto r = solve_two_step(s, {}, {}, {});
  CHECK(r.gpu.served_load == 0.0);
  CHECK(r.residual == s.workload);
  CHECK(row_sum(r.cpu.routing[0][0]) == doctest::Approx(1.0));
}

TEST_CASE("two step: ample GPU serves everything") {
  DelayMatrix d(2, 5.0);
  d(0, 0) = d(1, 1) = 0;
  auto s = community({node("g", 4000, 1000, 1000, 1000), node("c", 4000, 1000)}, d,
                     {function("f", 100, 50, 200.0)}, {{6.0, 3.0}}, 0.1, 0.05);
  const auto r = solve_two_step(s, {}, {}, {});
  CHECK(r.gpu.served_fraction[0][0] == doctest::Approx(1.0));
  CHECK(r.gpu.served_fraction[0][1] == doctest::Approx(1.0));
  CHECK(r.residual[0][0] == doctest::Approx(0.0));
  CHECK(r.residual[0][1] == doctest::Approx(0.0));
  // At least one CPU instance stays for overflow.
  CHECK(r.cpu.deployed[0][0] + r.cpu.deployed[0][1] >= 1);
}

TEST_CASE("two step: GPU sized to 70% of demand") {
  DelayMatrix d(3, 5.0);
  for (int i = 0; i < 3; ++i) d(i, i) = 0;
  const double demand = 20.0;
  const double u_gpu = 0.05;  // GPU core-seconds per request
  const std::int64_t gpu_mc = 700;
  auto s = community({node("g", 4000, 4000, gpu_mc, 2000), node("c1", 4000, 4000), node("c2", 4000, 4000)},
                     d, {function("resnet", 500, 50, 500.0)}, {{8.0, 6.0, 6.0}}, 0.15, u_gpu);
  const double capacity_rps = static_cast<double>(gpu_mc) / (1000.0 * u_gpu);
  const double expected = std::min(capacity_rps, demand);
  const auto r = solve_two_step(s, {}, {}, {});
  CHECK(std::fabs(r.gpu.served_load - expected) <= 1e-6 * demand);
  double residual = 0.0;
  for (double v : r.residual[0]) residual += v;
  CHECK(residual == doctest::Approx(demand - expected));
  for (int i = 0; i < 3; ++i) {
    if (r.residual[0][i] > 0) CHECK(row_sum(r.cpu.routing[0][i]) == doctest::Approx(1.0));
  }
}

TEST_CASE("residual workload arithmetic") {
  PlacementSolution gpu;
  gpu.served_fraction = {{0.0, 1.0, 0.7}};
  const auto r = residual_workload({{5.0, 5.0, 10.0}}, gpu);
  CHECK(r[0][0] == 5.0);
  CHECK(r[0][1] == 0.0);
  CHECK(r[0][2] == doctest::Approx(3.0));
}

TEST_CASE("diff placements") {
  auto id = diff_placements({{1, 0, 1}}, {{1, 0, 1}}, ResourceKind::cpu);
  CHECK(id.functions[0].creations == 0);
  CHECK(id.functions[0].deletions == 0);
  CHECK(id.functions[0].migrations == 0);
  auto grow = diff_placements({{1, 0, 0}}, {{1, 1, 0}}, ResourceKind::cpu);
  CHECK(grow.functions[0].creations == 1);
  CHECK(grow.functions[0].deletions == 0);
  CHECK(grow.functions[0].migrations == 0);
  auto move = diff_placements({{1, 1, 0}}, {{0, 1, 1}}, ResourceKind::cpu);
  CHECK(move.functions[0].creations == 1);
  CHECK(move.functions[0].deletions == 1);
  CHECK(move.functions[0].migrations == 1);
  CHECK(move.functions[0].create_on == std::vector<std::size_t>{2});
  CHECK(move.functions[0].delete_from == std::vector<std::size_t>{0});
}

TEST_CASE("CPU infeasibility names the binding constraint class") {
  auto cap = community({node("a", 1000, 1000)}, DelayMatrix(1), {function("f", 100, 50)}, {{50.0}});
  try {
    solve_pass(cap, ResourceKind::cpu, {}, {});
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(e.pass() == ResourceKind::cpu);
    CHECK(e.constraint_class() == "capacity");
  }
  auto mem = community({node("a", 4000, 50)}, DelayMatrix(1), {function("f", 100, 50)}, {{1.0}});
  try {
    solve_pass(mem, ResourceKind::cpu, {}, {});
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(e.constraint_class() == "memory");
  }
}

TEST_CASE("idle functions keep one instance and idle rows route within phi") {
  DelayMatrix d(std::vector<std::vector<double>>{{0, 10, 90}, {10, 0, 90}, {90, 90, 0}});
  auto s = community({node("a", 4000, 1000), node("b", 4000, 1000), node("c", 4000, 1000)}, d,
                     {function("busy", 100, 50), function("idle", 100, 50)}, {{5.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
  const auto sol = solve_pass(s, ResourceKind::cpu, {}, {});
  CHECK(sol.deployed[1][0] + sol.deployed[1][1] + sol.deployed[1][2] == 1);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (sol.routing[1][i][j] > 0) CHECK(d(i, j) <= 50.0);
    }
  }
}

TEST_CASE("brute force backend agrees with branch and bound") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    auto s = instances::random_community(rng, 1 + rng() % 3, 1 + rng() % 2, false);
    const auto old = instances::random_deployed(rng, s);
    PlacementConfig bb, bf;
    bf.backend = Backend::brute_force;
    try {
      const auto a = solve_pass(s, ResourceKind::cpu, old, bb);
      const auto b = solve_pass(s, ResourceKind::cpu, old, bf);
      CHECK(a.o_best == doctest::Approx(b.o_best));
      CHECK(a.disruption_objective == doctest::Approx(b.disruption_objective));
    } catch (const InfeasibleError&) {
      CHECK_THROWS_AS(solve_pass(s, ResourceKind::cpu, old, bf), InfeasibleError);
    }
  }
}

TEST_CASE("report lists deployments, routing and plans") {
  auto s = community({node("a", 4000, 1000)}, DelayMatrix(1), {function("f", 100, 50)}, {{2.0}});
  const auto r = solve_two_step(s, {}, {}, {});
  const auto j = to_json(s, r);
  CHECK(j["format_version"] == 1);
  CHECK(j["cpu"]["deployed"].size() == 1);
  CHECK(j["cpu"]["routing"][0]["fraction"] == 1.0);
  CHECK(j["cpu"]["plan"][0]["creations"] == 1);
  CHECK(j["gpu"]["deployed"].empty());
}
