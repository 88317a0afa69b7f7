#include "mecctl/placement.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mecctl::placement {

using milp::Sense;
using milp::Term;

const char* to_string(ResourceKind kind) { return kind == ResourceKind::gpu ? "gpu" : "cpu"; }

std::vector<std::string> validate_state(const CommunityState& s) {
  std::vector<std::string> out;
  const std::size_t n = s.nodes.size();
  const std::size_t nf = s.functions.size();
  if (s.delays.size() != n) out.push_back("delay matrix size does not match node count");
  for (const auto& e : s.delays.validate()) out.push_back("delays" + e);
  auto check_grid = [&](const Grid& g, const char* name, bool positive) {
    if (g.size() != nf) {
      out.push_back(std::string(name) + " must have one row per function");
      return;
    }
    for (std::size_t f = 0; f < nf; ++f) {
      if (g[f].size() != n) {
        out.push_back(std::string(name) + "[" + std::to_string(f) + "] must have one entry per node");
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double v = g[f][j];
        if (!std::isfinite(v) || v < 0 || (positive && v == 0)) {
          out.push_back(std::string(name) + "[" + std::to_string(f) + "][" + std::to_string(j) +
                        "] out of range");
        }
      }
    }
  };
  check_grid(s.workload, "workload", false);
  check_grid(s.cpu_usage, "cpu_usage", true);
  if (!s.gpu_usage.empty()) check_grid(s.gpu_usage, "gpu_usage", false);
  for (std::size_t f = 0; f < nf; ++f) {
    if (s.functions[f].gpu_capable() && s.gpu_usage.size() == nf && s.gpu_usage[f].size() == n) {
      for (std::size_t j = 0; j < n; ++j) {
        if (s.nodes[j].has_gpu() && !(s.gpu_usage[f][j] > 0)) {
          out.push_back("gpu_usage[" + std::to_string(f) + "][" + std::to_string(j) + "] must be > 0");
        }
      }
    } else if (s.functions[f].gpu_capable() && s.gpu_usage.size() != nf) {
      out.push_back("gpu_usage required for GPU-capable functions");
      break;
    }
  }
  return out;
}

namespace {

bool in_pass(const FunctionSpec& f, ResourceKind kind) {
  return kind == ResourceKind::cpu || f.gpu_capable();
}

bool node_in_pass(const topology::NodeDescriptor& n, ResourceKind kind) {
  return kind == ResourceKind::cpu || n.has_gpu();
}

double usage(const CommunityState& s, ResourceKind kind, std::size_t f, std::size_t j) {
  return kind == ResourceKind::gpu ? s.gpu_usage[f][j] : s.cpu_usage[f][j];
}

double capacity_mc(const topology::NodeDescriptor& n, ResourceKind kind, const PlacementConfig& cfg) {
  return kind == ResourceKind::gpu ? static_cast<double>(n.gpu_mc) * cfg.gpu_utilization_target
                                   : static_cast<double>(n.cpu_mc) * cfg.cpu_utilization_target;
}

double memory_mb(const topology::NodeDescriptor& n, ResourceKind kind) {
  return kind == ResourceKind::gpu ? n.gpu_memory_mb : n.cpu_memory_mb;
}

double footprint_mb(const FunctionSpec& f, ResourceKind kind) {
  return kind == ResourceKind::gpu ? f.gpu_memory_mb.value_or(0.0) : f.cpu_memory_mb;
}

std::string idx_name(const char* prefix, std::initializer_list<std::size_t> ids) {
  std::string s = prefix;
  for (auto v : ids) s += "_" + std::to_string(v);
  return s;
}

}  // namespace

PassModel build_delay_min_model(const CommunityState& s, ResourceKind kind,
                                 const PlacementConfig& cfg, const ModelOptions& opt) {
  PassModel pm;
  pm.kind = kind;
  const std::size_t n = s.nodes.size();
  const std::size_t nf = s.functions.size();
  for (std::size_t f = 0; f < nf; ++f) {
    if (in_pass(s.functions[f], kind)) pm.functions.push_back(f);
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (node_in_pass(s.nodes[j], kind)) pm.nodes.push_back(j);
  }
  pm.c.assign(nf, std::vector<std::size_t>(n, kNoVar));
  pm.x.assign(nf, std::vector<std::vector<std::size_t>>(n, std::vector<std::size_t>(n, kNoVar)));
  auto& m = pm.model;

  for (std::size_t f : pm.functions) {
    for (std::size_t j : pm.nodes) pm.c[f][j] = m.add_binary(idx_name("c", {f, j}));
  }
  std::vector<Term> served;
  for (std::size_t f : pm.functions) {
    const double phi = s.functions[f].max_net_delay_ms;
    for (std::size_t i = 0; i < n; ++i) {
      const double lambda = s.workload[f][i];
      if (!(lambda > 0)) continue;
      std::vector<Term> row;
      for (std::size_t j : pm.nodes) {
        if (s.delays(i, j) > phi) continue;
        const std::size_t x = m.add_continuous(0.0, 1.0, idx_name("x", {f, i, j}));
        pm.x[f][i][j] = x;
        row.push_back({x, 1.0});
        served.push_back({x, lambda});
        m.add_constraint({{x, 1.0}, {pm.c[f][j], -1.0}}, Sense::less_equal, 0.0,
                         idx_name("link", {f, i, j}));
        if (opt.objective == Objective::delay) m.add_objective(x, lambda * s.delays(i, j));
        if (opt.objective == Objective::served_load) m.add_objective(x, -lambda);
      }
      if (kind == ResourceKind::cpu) {
        m.add_constraint(std::move(row), Sense::equal, 1.0, idx_name("route", {f, i}));
      } else if (!row.empty()) {
        m.add_constraint(std::move(row), Sense::less_equal, 1.0, idx_name("route", {f, i}));
      }
    }
  }

  for (std::size_t j : pm.nodes) {
    if (!opt.relax_memory) {
      std::vector<Term> mem;
      for (std::size_t f : pm.functions) mem.push_back({pm.c[f][j], footprint_mb(s.functions[f], kind)});
      if (!mem.empty()) {
        m.add_constraint(std::move(mem), Sense::less_equal, memory_mb(s.nodes[j], kind),
                         idx_name("mem", {j}));
      }
    }
    if (!opt.relax_capacity) {
      std::vector<Term> cap;
      for (std::size_t f : pm.functions) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t x = pm.x[f][i][j];
          if (x != kNoVar) cap.push_back({x, s.workload[f][i] * usage(s, kind, f, j) * 1000.0});
        }
      }
      if (!cap.empty()) {
        m.add_constraint(std::move(cap), Sense::less_equal, capacity_mc(s.nodes[j], kind, cfg),
                         idx_name("cap", {j}));
      }
    }
  }

  if (opt.require_instance) {
    for (std::size_t f : pm.functions) {
      std::vector<Term> row;
      for (std::size_t j : pm.nodes) row.push_back({pm.c[f][j], 1.0});
      if (!row.empty()) m.add_constraint(std::move(row), Sense::greater_equal, 1.0, idx_name("keep", {f}));
    }
  }
  if (opt.min_served_load && !served.empty()) {
    m.add_constraint(served, Sense::greater_equal, *opt.min_served_load, "served");
  }
  return pm;
}

PassModel build_disruption_min_model(const CommunityState& s, ResourceKind kind,
                                     const PlacementConfig& cfg, const ModelOptions& opt,
                                     double o_best, const Deployed& c_old) {
  ModelOptions base = opt;
  base.objective = Objective::none;
  PassModel pm = build_delay_min_model(s, kind, cfg, base);
  auto& m = pm.model;
  const std::size_t n = s.nodes.size();
  const std::size_t nf = s.functions.size();

  std::vector<Term> delay;
  for (std::size_t f : pm.functions) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t x = pm.x[f][i][j];
        const double coef = x == kNoVar ? 0.0 : s.workload[f][i] * s.delays(i, j);
        if (coef != 0.0) delay.push_back({x, coef});
      }
    }
  }
  if (!delay.empty()) {
    m.add_constraint(std::move(delay), Sense::less_equal, o_best * (1.0 + cfg.epsilon), "delay_band");
  }

  const double big = static_cast<double>(pm.nodes.size());
  pm.mg.assign(nf, kNoVar);
  pm.z.assign(nf, kNoVar);
  pm.dl_select.assign(nf, {});
  pm.cr_select.assign(nf, {});
  for (std::size_t f : pm.functions) {
    auto was = [&](std::size_t j) {
      return f < c_old.size() && j < c_old[f].size() && c_old[f][j] != 0;
    };
    double n_old = 0.0;
    std::vector<Term> dl_row, cr_row;
    for (std::size_t j : pm.nodes) {
      if (was(j)) {
        n_old += 1.0;
        dl_row.push_back({pm.c[f][j], 1.0});
      } else {
        cr_row.push_back({pm.c[f][j], 1.0});
      }
    }
    std::vector<Term> dl_onehot, cr_onehot;
    for (std::size_t k = 0; k <= pm.nodes.size(); ++k) {
      const std::size_t d = m.add_binary(idx_name("dl", {f, k}));
      const std::size_t e = m.add_binary(idx_name("cr", {f, k}));
      pm.dl_select[f].push_back(d);
      pm.cr_select[f].push_back(e);
      dl_row.push_back({d, static_cast<double>(k)});
      cr_row.push_back({e, -static_cast<double>(k)});
      dl_onehot.push_back({d, 1.0});
      cr_onehot.push_back({e, 1.0});
      m.add_objective(d, 1.0 / static_cast<double>(k + 2));
      m.add_objective(e, -1.0 / static_cast<double>(k + 2));
    }
    // DL = n_old - sum_{old} c ; CR = sum_{new} c.
    m.add_constraint(std::move(dl_row), Sense::equal, n_old, idx_name("dl_def", {f}));
    m.add_constraint(std::move(cr_row), Sense::equal, 0.0, idx_name("cr_def", {f}));
    m.add_constraint(std::move(dl_onehot), Sense::equal, 1.0, idx_name("dl_one", {f}));
    m.add_constraint(std::move(cr_onehot), Sense::equal, 1.0, idx_name("cr_one", {f}));

    const std::size_t mg = m.add_continuous(0.0, big, idx_name("mg", {f}));
    const std::size_t z = m.add_binary(idx_name("z", {f}));
    pm.mg[f] = mg;
    pm.z[f] = z;
    m.add_objective(mg, 1.0);
    // MG >= CR - B z
    std::vector<Term> a{{mg, 1.0}, {z, big}};
    // MG >= DL - B (1 - z)  <=>  MG + sum_{old} c - B z >= n_old - B
    std::vector<Term> b{{mg, 1.0}, {z, -big}};
    for (std::size_t j : pm.nodes) {
      if (was(j)) {
        b.push_back({pm.c[f][j], 1.0});
      } else {
        a.push_back({pm.c[f][j], -1.0});
      }
    }
    m.add_constraint(std::move(a), Sense::greater_equal, 0.0, idx_name("mg_cr", {f}));
    m.add_constraint(std::move(b), Sense::greater_equal, n_old - big, idx_name("mg_dl", {f}));
  }
  return pm;
}

double evaluate_net_delay(const CommunityState& s, const Routing& routing) {
  double total = 0.0;
  for (std::size_t f = 0; f < routing.size(); ++f) {
    for (std::size_t i = 0; i < routing[f].size(); ++i) {
      for (std::size_t j = 0; j < routing[f][i].size(); ++j) {
        total += routing[f][i][j] * s.workload[f][i] * s.delays(i, j);
      }
    }
  }
  return total;
}

namespace {

std::vector<std::size_t> c_vars(const PassModel& pm) {
  std::vector<std::size_t> out;
  for (std::size_t f : pm.functions) {
    for (std::size_t j : pm.nodes) out.push_back(pm.c[f][j]);
  }
  return out;
}

// Brute force over the placement binaries of a disruption model: every other
// binary is a function of c, so it is fixed too and one LP is solved per mask.
milp::Solution brute_force_disruption(const PassModel& pm, const Deployed& c_old,
                                      const milp::SolverConfig& cfg) {
  const auto cs = c_vars(pm);
  if (cs.size() > milp::kBruteForceMaxBinaries) {
    throw std::invalid_argument("too many placement binaries for brute force");
  }
  milp::Solution best;
  best.status = milp::Status::infeasible;
  std::size_t lps = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cs.size()); ++mask) {
    milp::Model m = pm.model;
    for (std::size_t b = 0; b < cs.size(); ++b) {
      const double v = (mask >> b) & 1U ? 1.0 : 0.0;
      m.set_bounds(cs[b], v, v);
    }
    std::size_t bit = 0;
    for (std::size_t f : pm.functions) {
      int dl = 0, cr = 0;
      for (std::size_t j : pm.nodes) {
        const bool on = (mask >> bit++) & 1U;
        const bool old = f < c_old.size() && j < c_old[f].size() && c_old[f][j] != 0;
        if (old && !on) ++dl;
        if (!old && on) ++cr;
      }
      for (std::size_t k = 0; k < pm.dl_select[f].size(); ++k) {
        const double dv = static_cast<int>(k) == dl ? 1.0 : 0.0;
        const double ev = static_cast<int>(k) == cr ? 1.0 : 0.0;
        m.set_bounds(pm.dl_select[f][k], dv, dv);
        m.set_bounds(pm.cr_select[f][k], ev, ev);
      }
      const double zv = dl <= cr ? 1.0 : 0.0;
      m.set_bounds(pm.z[f], zv, zv);
    }
    auto s = milp::simplex_solve(m, cfg);
    ++lps;
    if (s.status == milp::Status::optimal &&
        (best.status != milp::Status::optimal || s.objective < best.objective)) {
      best = std::move(s);
    }
  }
  best.nodes = lps;
  return best;
}

milp::Solution run_solver(const PassModel& pm, const PlacementConfig& cfg, bool disruption,
                          const Deployed& c_old) {
  if (cfg.backend == Backend::brute_force) {
    return disruption ? brute_force_disruption(pm, c_old, cfg.solver)
                      : milp::brute_force_solve(pm.model, cfg.solver);
  }
  return milp::branch_and_bound(pm.model, cfg.solver);
}

bool usable(const milp::Solution& s) {
  return (s.status == milp::Status::optimal || s.status == milp::Status::node_limit) && s.has_values();
}

PlacementSolution empty_solution(const CommunityState& s, ResourceKind kind) {
  const std::size_t n = s.nodes.size();
  const std::size_t nf = s.functions.size();
  PlacementSolution sol;
  sol.kind = kind;
  sol.deployed.assign(nf, std::vector<int>(n, 0));
  sol.routing.assign(nf, Grid(n, std::vector<double>(n, 0.0)));
  sol.served_fraction.assign(nf, std::vector<double>(n, 0.0));
  return sol;
}

PlacementSolution extract(const CommunityState& s, const PassModel& pm, const std::vector<double>& v) {
  PlacementSolution sol = empty_solution(s, pm.kind);
  const std::size_t n = s.nodes.size();
  for (std::size_t f : pm.functions) {
    for (std::size_t j : pm.nodes) sol.deployed[f][j] = v[pm.c[f][j]] > 0.5 ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t x = pm.x[f][i][j];
        if (x == kNoVar || !sol.deployed[f][j]) continue;
        const double val = std::clamp(v[x], 0.0, 1.0);
        if (val > 1e-9) {
          sol.routing[f][i][j] = val;
          sum += val;
        }
      }
      // CPU rows carry all of their load; GPU rows at most all of it.
      const bool loaded = s.workload[f][i] > 0;
      if (sum > 0 && ((pm.kind == ResourceKind::cpu && loaded) || sum > 1.0)) {
        for (auto& val : sol.routing[f][i]) val /= sum;
        sum = 1.0;
      }
      sol.served_fraction[f][i] = sum;
    }
  }
  return sol;
}

// Rows without load get the nearest deployed instance within phi, so traffic
// that appears between solves has somewhere to go.
void fill_idle_rows(const CommunityState& s, PlacementSolution& sol) {
  const std::size_t n = s.nodes.size();
  for (std::size_t f = 0; f < s.functions.size(); ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      if (s.workload[f][i] > 0) continue;
      std::size_t best = kNoVar;
      for (std::size_t j = 0; j < n; ++j) {
        if (!sol.deployed[f][j] || s.delays(i, j) > s.functions[f].max_net_delay_ms) continue;
        if (best == kNoVar || s.delays(i, j) < s.delays(i, best)) best = j;
      }
      if (best == kNoVar) continue;
      sol.routing[f][i].assign(n, 0.0);
      sol.routing[f][i][best] = 1.0;
      sol.served_fraction[f][i] = 1.0;
    }
  }
}

double served_load(const CommunityState& s, const Routing& routing) {
  double total = 0.0;
  for (std::size_t f = 0; f < routing.size(); ++f) {
    for (std::size_t i = 0; i < routing[f].size(); ++i) {
      for (double x : routing[f][i]) total += x * s.workload[f][i];
    }
  }
  return total;
}

std::string diagnose(const CommunityState& s, ResourceKind kind, const PlacementConfig& cfg) {
  auto feasible = [&](bool relax_cap, bool relax_mem) {
    ModelOptions o;
    o.objective = Objective::none;
    o.relax_capacity = relax_cap;
    o.relax_memory = relax_mem;
    return milp::branch_and_bound(build_delay_min_model(s, kind, cfg, o).model, cfg.solver).status !=
           milp::Status::infeasible;
  };
  if (feasible(true, false)) return "capacity";
  if (feasible(false, true)) return "memory";
  if (feasible(true, true)) return "capacity+memory";
  return "locality";
}

}  // namespace

PlacementSolution solve_pass(const CommunityState& s, ResourceKind kind, const Deployed& c_old,
                             const PlacementConfig& cfg) {
  ModelOptions opt;
  opt.require_instance = kind == ResourceKind::cpu;

  if (kind == ResourceKind::gpu) {
    ModelOptions first;
    first.objective = Objective::served_load;
    auto pm = build_delay_min_model(s, kind, cfg, first);
    if (pm.functions.empty() || pm.nodes.empty()) return empty_solution(s, kind);
    const auto top = run_solver(pm, cfg, false, c_old);
    const double best = usable(top) ? -top.objective : 0.0;
    if (best > 0) opt.min_served_load = best - 1e-12 * std::max(1.0, best);
  }

  auto pm1 = build_delay_min_model(s, kind, cfg, opt);
  auto s1 = run_solver(pm1, cfg, false, c_old);
  if (!usable(s1) && opt.require_instance) {
    opt.require_instance = false;
    pm1 = build_delay_min_model(s, kind, cfg, opt);
    s1 = run_solver(pm1, cfg, false, c_old);
  }
  if (!usable(s1)) {
    const std::string cls = diagnose(s, kind, cfg);
    throw InfeasibleError(kind, cls,
                          std::string(to_string(kind)) + " pass infeasible: " + cls + " constraints");
  }
  const double o_best = std::max(0.0, s1.objective);

  auto pm2 = build_disruption_min_model(s, kind, cfg, opt, o_best, c_old);
  auto s2 = run_solver(pm2, cfg, true, c_old);

  PlacementSolution sol;
  if (usable(s2)) {
    sol = extract(s, pm2, s2.values);
    sol.disruption_objective = s2.objective;
    sol.bb_nodes = s1.nodes + s2.nodes;
  } else {
    sol = extract(s, pm1, s1.values);
    sol.step2_fallback = true;
    sol.bb_nodes = s1.nodes;
  }
  sol.o_best = o_best;
  if (kind == ResourceKind::cpu) fill_idle_rows(s, sol);
  sol.net_delay = evaluate_net_delay(s, sol.routing);
  sol.served_load = served_load(s, sol.routing);
  return sol;
}

Grid residual_workload(const Grid& workload, const PlacementSolution& gpu) {
  Grid out = workload;
  for (std::size_t f = 0; f < out.size(); ++f) {
    for (std::size_t i = 0; i < out[f].size(); ++i) {
      double served = 0.0;
      if (f < gpu.served_fraction.size() && i < gpu.served_fraction[f].size()) {
        served = gpu.served_fraction[f][i];
      }
      out[f][i] = workload[f][i] * (1.0 - std::clamp(served, 0.0, 1.0));
    }
  }
  return out;
}

DeploymentPlan diff_placements(const Deployed& old_deployed, const Deployed& new_deployed,
                               ResourceKind kind) {
  DeploymentPlan plan;
  plan.kind = kind;
  const std::size_t nf = std::max(old_deployed.size(), new_deployed.size());
  plan.functions.resize(nf);
  auto at = [](const Deployed& d, std::size_t f, std::size_t j) {
    return f < d.size() && j < d[f].size() && d[f][j] != 0;
  };
  for (std::size_t f = 0; f < nf; ++f) {
    const std::size_t n = std::max(f < old_deployed.size() ? old_deployed[f].size() : 0,
                                   f < new_deployed.size() ? new_deployed[f].size() : 0);
    auto& fp = plan.functions[f];
    for (std::size_t j = 0; j < n; ++j) {
      const bool was = at(old_deployed, f, j);
      const bool now = at(new_deployed, f, j);
      if (was && !now) fp.delete_from.push_back(j);
      if (!was && now) fp.create_on.push_back(j);
    }
    fp.creations = static_cast<int>(fp.create_on.size());
    fp.deletions = static_cast<int>(fp.delete_from.size());
    fp.migrations = std::min(fp.creations, fp.deletions);
  }
  return plan;
}

TwoStepResult solve_two_step(const CommunityState& s, const Deployed& previous_gpu,
                             const Deployed& previous_cpu, const PlacementConfig& cfg) {
  TwoStepResult r;
  r.gpu = solve_pass(s, ResourceKind::gpu, previous_gpu, cfg);
  r.residual = residual_workload(s.workload, r.gpu);
  CommunityState cpu_state = s;
  cpu_state.workload = r.residual;
  r.cpu = solve_pass(cpu_state, ResourceKind::cpu, previous_cpu, cfg);
  const std::size_t nf = s.functions.size();
  const std::size_t n = s.nodes.size();
  auto blank = Deployed(nf, std::vector<int>(n, 0));
  r.gpu_plan = diff_placements(previous_gpu.empty() ? blank : previous_gpu, r.gpu.deployed,
                               ResourceKind::gpu);
  r.cpu_plan = diff_placements(previous_cpu.empty() ? blank : previous_cpu, r.cpu.deployed,
                               ResourceKind::cpu);
  return r;
}

namespace {

double round9(double v) {
  const double r = std::round(v * 1e9) / 1e9;
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

nlohmann::json pass_json(const CommunityState& s, const PlacementSolution& sol,
                         const DeploymentPlan& plan) {
  using nlohmann::json;
  json j;
  j["kind"] = to_string(sol.kind);
  j["o_best"] = round9(sol.o_best);
  j["net_delay"] = round9(sol.net_delay);
  j["served_load"] = round9(sol.served_load);
  j["disruption_objective"] = round9(sol.disruption_objective);
  j["step2_fallback"] = sol.step2_fallback;
  json deployed = json::array();
  json routing = json::array();
  json served = json::array();
  json plans = json::array();
  for (std::size_t f = 0; f < s.functions.size(); ++f) {
    const auto& name = s.functions[f].name;
    for (std::size_t jn = 0; jn < s.nodes.size(); ++jn) {
      if (sol.deployed[f][jn]) deployed.push_back({{"function", name}, {"node", s.nodes[jn].id}});
    }
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
      for (std::size_t jn = 0; jn < s.nodes.size(); ++jn) {
        const double x = round9(sol.routing[f][i][jn]);
        if (x == 0.0) continue;
        routing.push_back({{"function", name},
                           {"source", s.nodes[i].id},
                           {"target", s.nodes[jn].id},
                           {"fraction", x}});
      }
      if (sol.kind == ResourceKind::gpu && s.workload[f][i] > 0) {
        served.push_back({{"function", name},
                          {"source", s.nodes[i].id},
                          {"fraction", round9(sol.served_fraction[f][i])}});
      }
    }
    const auto& fp = plan.functions[f];
    json create = json::array();
    json remove = json::array();
    for (auto jn : fp.create_on) create.push_back(s.nodes[jn].id);
    for (auto jn : fp.delete_from) remove.push_back(s.nodes[jn].id);
    plans.push_back({{"function", name},
                     {"creations", fp.creations},
                     {"deletions", fp.deletions},
                     {"migrations", fp.migrations},
                     {"create_on", create},
                     {"delete_from", remove}});
  }
  j["deployed"] = deployed;
  j["routing"] = routing;
  if (sol.kind == ResourceKind::gpu) j["served_fraction"] = served;
  j["plan"] = plans;
  return j;
}

}  // namespace

nlohmann::json to_json(const CommunityState& s, const TwoStepResult& r) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["gpu"] = pass_json(s, r.gpu, r.gpu_plan);
  j["cpu"] = pass_json(s, r.cpu, r.cpu_plan);
  nlohmann::json residual = nlohmann::json::array();
  for (std::size_t f = 0; f < s.functions.size(); ++f) {
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
      if (s.workload[f][i] > 0) {
        residual.push_back({{"function", s.functions[f].name},
                            {"source", s.nodes[i].id},
                            {"rate", round9(r.residual[f][i])}});
      }
    }
  }
  j["residual_workload"] = residual;
  return j;
}

}  // namespace mecctl::placement
