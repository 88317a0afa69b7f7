// mecctl: validate scenarios, run simulations, solve community snapshots and
// recompute report summaries.
//
// Exit status: 0 success, 1 invalid input or I/O error, 2 infeasible solve,
// 3 `report --check` mismatch.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mecctl/io.hpp"
#include "mecctl/placement.hpp"
#include "mecctl/report.hpp"
#include "mecctl/sim.hpp"

namespace {

int print_problems(const mecctl::io::LoadError& e) {
  std::cerr << "error: " << e.problems().size() << " problem(s)\n";
  for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
  return 1;
}

int cmd_validate(const std::string& path) {
  const auto loaded = mecctl::io::load_scenario(path);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  const auto& s = loaded.scenario;
  std::cout << path << ": ok (" << s.nodes.size() << " nodes, " << s.functions.size() << " functions, "
            << s.workload.size() << " workload programs, " << s.duration_s << " s)\n";
  return 0;
}

int cmd_run(const std::string& path, std::string out, std::optional<std::uint64_t> seed,
            std::optional<double> duration) {
  auto loaded = mecctl::io::load_scenario(path);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  auto& s = loaded.scenario;
  if (seed) s.seed = *seed;
  if (duration) s.duration_s = *duration;
  if (const auto problems = mecctl::sim::validate_scenario(s); !problems.empty()) {
    throw mecctl::io::LoadError(problems);
  }
  if (out.empty()) {
    const char* env = std::getenv("MECCTL_OUT_DIR");
    out = (std::filesystem::path(env && *env ? env : "out") / (s.name.empty() ? "run" : s.name)).string();
  }
  const auto report = mecctl::sim::run(s);
  mecctl::report::write_bundle(out, s, report);
  std::cout << mecctl::report::summary_csv(
      mecctl::report::summarize(mecctl::report::meta_of(s), report.requests, report.windows));
  std::cerr << "wrote " << out << " (" << report.generated << " requests, " << report.activations.size()
            << " placements)\n";
  if (report.audit.cpu_violations + report.audit.gpu_violations > 0) {
    std::cerr << "warning: capacity audit recorded violations\n";
  }
  return 0;
}

int cmd_solve(const std::string& path, const std::string& out, const std::string& backend) {
  auto snap = mecctl::io::load_snapshot(path);
  if (backend == "brute-force") snap.config.backend = mecctl::placement::Backend::brute_force;
  nlohmann::json doc;
  int status = 0;
  try {
    const auto result = mecctl::placement::solve_two_step(snap.state, snap.previous_gpu, snap.previous_cpu,
                                                          snap.config);
    doc = mecctl::placement::to_json(snap.state, result);
    doc["status"] = "optimal";
  } catch (const mecctl::placement::InfeasibleError& e) {
    doc = {{"format_version", 1},
           {"status", "infeasible"},
           {"pass", mecctl::placement::to_string(e.pass())},
           {"constraint_class", e.constraint_class()},
           {"message", e.what()}};
    status = 2;
  }
  const std::string text = doc.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error(out + ": cannot write");
    f << text;
  }
  if (status != 0) std::cerr << "infeasible: " << doc["pass"].get<std::string>() << " pass, "
                             << doc["constraint_class"].get<std::string>() << "\n";
  return status;
}

int cmd_report(const std::string& dir, bool check) {
  const auto bundle = mecctl::report::read_bundle(dir);
  const auto text =
      mecctl::report::summary_csv(mecctl::report::summarize(bundle.meta, bundle.requests, bundle.windows));
  std::cout << text;
  if (check) {
    std::ifstream in(std::filesystem::path(dir) / "summary.csv", std::ios::binary);
    std::stringstream stored;
    stored << in.rdbuf();
    if (stored.str() != text) {
      std::cerr << "summary.csv differs from the recomputed summary\n";
      return 3;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mecctl: edge placement, routing and vertical scaling simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, snapshot_path, solve_out, backend = "branch-and-bound", report_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  bool check = false;

  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("scenario", scenario_path, "Scenario JSON")->required();

  auto* run = app.add_subcommand("run", "Simulate a scenario and write a report bundle");
  run->add_option("scenario", scenario_path, "Scenario JSON")->required();
  run->add_option("--out", out_dir, "Output directory (default: $MECCTL_OUT_DIR/<name> or out/<name>)");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--duration", duration, "Override the duration in seconds");

  auto* solve = app.add_subcommand("solve", "Run the two-step placement on a community snapshot");
  solve->add_option("snapshot", snapshot_path, "Snapshot JSON")->required();
  solve->add_option("--out", solve_out, "Output file (default: stdout)");
  solve->add_option("--backend", backend, "Solver backend")
      ->check(CLI::IsMember({"branch-and-bound", "brute-force"}));

  auto* report = app.add_subcommand("report", "Recompute the summary of a report bundle");
  report->add_option("dir", report_dir, "Bundle directory")->required();
  report->add_flag("--check", check, "Fail if summary.csv differs from the recomputed summary");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(scenario_path);
    if (*run) return cmd_run(scenario_path, out_dir, seed, duration);
    if (*solve) return cmd_solve(snapshot_path, solve_out, backend);
    if (*report) return cmd_report(report_dir, check);
  } catch (const mecctl::io::LoadError& e) {
    return print_problems(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
