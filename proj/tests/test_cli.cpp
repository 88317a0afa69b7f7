#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mecctl/io.hpp"
#include "mecctl/report.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(MECCTL_SOURCE_DIR) / "scenarios";

json minimal() {
  return json::parse(R"({
    "format_version": 1,
    "duration_s": 30,
    "nodes": [{"id": "n0", "cpu_mc": 2000, "cpu_memory_mb": 2048},
              {"id": "n1", "cpu_mc": 2000, "cpu_memory_mb": 2048}],
    "delays_ms": [[0, 10], [10, 0]],
    "functions": [{"name": "f", "cpu_memory_mb": 128, "max_net_delay_ms": 50, "required_rt_ms": 300,
                   "demand": {"mean_core_ms": 20}}],
    "workload": [{"kind": "fixed", "function": "f", "node": "n0", "rate_rps": 5}]
  })");
}

std::vector<std::string> problems_of(const json& doc) {
  try {
    mecctl::io::parse_scenario(doc);
  } catch (const mecctl::io::LoadError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& text) {
  for (const auto& p : problems) {
    if (p.find(text) != std::string::npos) return true;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mecctl_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("minimal scenario gets documented defaults") {
  const auto loaded = mecctl::io::parse_scenario(minimal());
  const auto& s = loaded.scenario;
  CHECK(loaded.warnings.empty());
  CHECK(s.control.epsilon == 0.05);
  CHECK(s.control.node_period_s == 5);
  CHECK(s.control.community_period_s == 60);
  CHECK(s.control.topology_period_s == 600);
  CHECK(s.functions[0].setpoint() == 150);
  CHECK(s.workload[0].poisson);
  CHECK(s.control.prop_gain == 50);
  CHECK(s.control.int_gain == 100);
}

TEST_CASE("negative delay is rejected naming the cell") {
  auto doc = minimal();
  doc["delays_ms"][0][1] = -4;
  const auto problems = problems_of(doc);
  REQUIRE_FALSE(problems.empty());
  CHECK(mentions(problems, "delays_ms[0][1]"));
}

TEST_CASE("all problems are reported together") {
  auto doc = minimal();
  doc["nodes"][1].erase("cpu_mc");
  doc["functions"][0]["required_rt_ms"] = "fast";
  doc["workload"][0]["node"] = "nowhere";
  doc["control"] = {{"epsilon", -1}, {"colour", "red"}};
  const auto problems = problems_of(doc);
  CHECK(mentions(problems, "nodes[1].cpu_mc: missing required field"));
  CHECK(mentions(problems, "functions[0].required_rt_ms: expected a number"));
  CHECK(mentions(problems, "workload[0].node: unknown node 'nowhere'"));
  CHECK(mentions(problems, "control.colour: unknown field"));
  CHECK(mentions(problems, "control.epsilon"));
}

TEST_CASE("gpu function without a gpu node is accepted with a warning") {
  auto doc = minimal();
  doc["functions"][0]["gpu_memory_mb"] = 1024;
  doc["functions"][0]["gpu"] = {{"service_ms", 100}, {"slot_mc", 100}, {"usage_core_s", 0.1}};
  const auto loaded = mecctl::io::parse_scenario(doc);
  REQUIRE(loaded.warnings.size() == 1);
  CHECK(loaded.warnings[0].find("GPU") != std::string::npos);
}

TEST_CASE("every shipped scenario validates") {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(kScenarios)) {
    if (entry.path().extension() != ".json" || entry.path().filename().string().rfind("snapshot", 0) == 0) continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(mecctl::io::load_scenario(entry.path().string()));
    ++count;
  }
  CHECK(count >= 4);
  CHECK_NOTHROW(mecctl::io::load_snapshot((kScenarios / "snapshot_3node.json").string()));
}

TEST_CASE("bundle round trip reproduces the summary exactly") {
  auto s = mecctl::io::parse_scenario(minimal()).scenario;
  s.duration_s = 120;
  s.warmup_s = 20;
  s.functions[0].demand.dist = mecctl::sim::DemandModel::Dist::lognormal;
  s.functions[0].demand.cv = 0.5;
  const auto report = mecctl::sim::run(s);
  const auto dir = temp_dir("roundtrip");
  mecctl::report::write_bundle(dir.string(), s, report);
  const auto bundle = mecctl::report::read_bundle(dir.string());
  CHECK(bundle.requests.size() == report.requests.size());
  for (std::size_t k = 0; k < bundle.requests.size(); ++k) {
    CHECK(bundle.requests[k].rt_ms == report.requests[k].rt_ms);
    CHECK(bundle.requests[k].arrival_s == report.requests[k].arrival_s);
  }
  const auto recomputed =
      mecctl::report::summary_csv(mecctl::report::summarize(bundle.meta, bundle.requests, bundle.windows));
  CHECK(recomputed == slurp(dir / "summary.csv"));
  fs::remove_all(dir);
}

TEST_CASE("summary statistics against a direct computation") {
  mecctl::report::RunMeta meta;
  meta.functions = {"f"};
  meta.warmup_s = 10;
  std::vector<mecctl::sim::RequestRecord> recs;
  const std::vector<double> rts{100, 200, 300, 400};
  for (std::size_t k = 0; k < rts.size(); ++k) {
    mecctl::sim::RequestRecord r;
    r.arrival_s = 20 + static_cast<double>(k);
    r.outcome = mecctl::sim::Outcome::completed;
    r.rt_ms = rts[k];
    r.d_ms = 10;
    r.violated = rts[k] > 250;
    recs.push_back(r);
  }
  auto early = recs[0];
  early.arrival_s = 5;  // before the warm-up: ignored
  early.rt_ms = 1e6;
  recs.push_back(early);
  auto lost = recs[0];
  lost.outcome = mecctl::sim::Outcome::timeout;
  recs.push_back(lost);
  const auto rows = mecctl::report::summarize(meta, recs, {});
  REQUIRE(rows.size() == 1);
  double mean = 0;
  for (double x : rts) mean += x / static_cast<double>(rts.size());
  double var = 0;
  for (double x : rts) var += (x - mean) * (x - mean) / static_cast<double>(rts.size());
  CHECK(rows[0].completed == 4);
  CHECK(rows[0].timeouts == 1);
  CHECK(rows[0].rt_mean_ms == doctest::Approx(mean));
  CHECK(rows[0].rt_std_ms == doctest::Approx(std::sqrt(var)));
  CHECK(rows[0].violation_pct == doctest::Approx(100.0 * 3 / 5));
  CHECK(rows[0].network_pct == doctest::Approx(100.0 * 40 / 1000));
  CHECK(rows[0].p99_rt_ms == 400);
}

TEST_CASE("snapshot errors are aggregated") {
  auto doc = json::parse(slurp(kScenarios / "snapshot_3node.json"));
  doc["functions"][0]["workload_rps"] = {1, 2};
  doc["previous"]["cpu"][0]["node"] = "edge-9";
  try {
    mecctl::io::parse_snapshot(doc);
    FAIL("expected a LoadError");
  } catch (const mecctl::io::LoadError& e) {
    CHECK(mentions(e.problems(), "functions[0].workload_rps"));
    CHECK(mentions(e.problems(), "previous.cpu[0].node"));
  }
}
