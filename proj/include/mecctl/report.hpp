#pragma once

// Report bundle written by `mecctl run` and read back by `mecctl report`:
//
//   summary.csv      one row per function (columns: see kSummaryHeader)
//   timeseries.csv   one row per (node-period window, function)
//   requests.csv     one row per generated request
//   events.jsonl     placement, plan, lifecycle and routing events
//   meta.json        run parameters and counters
//
// Floating-point values in requests.csv and timeseries.csv are printed with
// 17 significant digits so that the summary can be recomputed exactly.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "mecctl/sim.hpp"

namespace mecctl::report {

inline constexpr const char* kSummaryHeader =
    "function,requests,completed,timeouts,rt_mean_ms,rt_std_ms,violation_pct,p99_rt_ms,network_pct,mean_mc,"
    "gpu_share_pct";

struct RunMeta {
  std::string scenario;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  double warmup_s = 0.0;
  std::vector<std::string> nodes;      // ids, by index
  std::vector<std::string> functions;  // names, by index
};

RunMeta meta_of(const sim::Scenario& scenario);

// Statistics over requests that arrived at or after the warm-up; mean_mc
// averages window rows ending after the warm-up.
struct SummaryRow {
  std::string function;
  std::size_t requests = 0;
  std::size_t completed = 0;
  std::size_t timeouts = 0;
  double rt_mean_ms = 0.0;
  double rt_std_ms = 0.0;      // population standard deviation
  double violation_pct = 0.0;  // (violating completions + timeouts) / (completed + timeouts)
  double p99_rt_ms = 0.0;
  double network_pct = 0.0;    // sum D / sum RT over completions
  double mean_mc = 0.0;
  double gpu_share_pct = 0.0;  // completions served by a GPU instance
};

std::vector<SummaryRow> summarize(const RunMeta& meta, std::span<const sim::RequestRecord> requests,
                                  std::span<const sim::WindowRow> windows);

std::string summary_csv(const std::vector<SummaryRow>& rows);

void write_bundle(const std::string& dir, const sim::Scenario& scenario, const sim::MetricsReport& report);

struct Bundle {
  RunMeta meta;
  std::vector<sim::RequestRecord> requests;
  std::vector<sim::WindowRow> windows;
};

// Throws std::runtime_error naming the file and line on malformed input.
Bundle read_bundle(const std::string& dir);

}  // namespace mecctl::report
