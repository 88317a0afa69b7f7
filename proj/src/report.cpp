#include "mecctl/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mecctl::report {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f6(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error(p.string() + ": cannot write");
  out << text;
}

constexpr const char* kRequestsHeader =
    "id,function,ingress,node,kind,outcome,arrival_s,dispatch_s,start_s,completion_s,d_ms,q_ms,e_ms,rt_ms,"
    "cpu_core_ms,violated";
constexpr const char* kSeriesHeader =
    "t_end_s,function,arrivals,completions,violations,mean_rt_ms,network_pct,allocated_mc,cpu_instances,"
    "gpu_instances,gpu_completions";

class CsvReader {
 public:
  CsvReader(const std::filesystem::path& p, const char* header) : path_(p.string()), in_(p) {
    if (!in_) throw std::runtime_error(path_ + ": cannot open");
    std::string line;
    if (!std::getline(in_, line) || line != header) fail("unexpected header");
  }

  bool next() {
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_;
    cells_ = split(line);
    col_ = 0;
    return true;
  }

  const std::string& cell() {
    if (col_ >= cells_.size()) fail("too few columns");
    return cells_[col_++];
  }

  double num() {
    const auto& c = cell();
    char* end = nullptr;
    const double v = std::strtod(c.c_str(), &end);
    if (c.empty() || *end != '\0') fail("bad number '" + c + "'");
    return v;
  }

  std::uint64_t count() {
    const double v = num();
    if (v < 0 || v != std::floor(v)) fail("bad count");
    return static_cast<std::uint64_t>(v);
  }

  std::size_t index(const std::map<std::string, std::size_t>& names) {
    const auto& c = cell();
    auto it = names.find(c);
    if (it == names.end()) fail("unknown name '" + c + "'");
    return it->second;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error(path_ + ":" + std::to_string(line_ + 1) + ": " + msg);
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<std::string> cells_;
  std::size_t col_ = 0;
  std::size_t line_ = 0;
};

std::map<std::string, std::size_t> index_of(const std::vector<std::string>& names) {
  std::map<std::string, std::size_t> out;
  for (std::size_t k = 0; k < names.size(); ++k) out.emplace(names[k], k);
  return out;
}

}  // namespace

RunMeta meta_of(const sim::Scenario& s) {
  RunMeta m;
  m.scenario = s.name;
  m.seed = s.seed;
  m.duration_s = s.duration_s;
  m.warmup_s = s.warmup_s;
  for (const auto& n : s.nodes) m.nodes.push_back(n.id);
  for (const auto& f : s.functions) m.functions.push_back(f.spec.name);
  return m;
}

std::vector<SummaryRow> summarize(const RunMeta& meta, std::span<const sim::RequestRecord> requests,
                                  std::span<const sim::WindowRow> windows) {
  const std::size_t nf = meta.functions.size();
  std::vector<SummaryRow> rows(nf);
  std::vector<std::vector<double>> rts(nf);
  std::vector<double> d_sum(nf, 0.0), violating(nf, 0.0), gpu(nf, 0.0);
  for (std::size_t f = 0; f < nf; ++f) rows[f].function = meta.functions[f];
  for (const auto& r : requests) {
    if (r.arrival_s < meta.warmup_s) continue;
    auto& row = rows[r.function];
    ++row.requests;
    if (r.outcome == sim::Outcome::timeout) {
      ++row.timeouts;
    } else if (r.outcome == sim::Outcome::completed) {
      ++row.completed;
      rts[r.function].push_back(r.rt_ms);
      d_sum[r.function] += r.d_ms;
      if (r.violated) violating[r.function] += 1;
      if (r.kind == placement::ResourceKind::gpu) gpu[r.function] += 1;
    }
  }
  for (std::size_t f = 0; f < nf; ++f) {
    auto& row = rows[f];
    const auto& v = rts[f];
    if (!v.empty()) {
      double sum = 0.0;
      for (double x : v) sum += x;
      row.rt_mean_ms = sum / static_cast<double>(v.size());
      double sq = 0.0;
      for (double x : v) sq += (x - row.rt_mean_ms) * (x - row.rt_mean_ms);
      row.rt_std_ms = std::sqrt(sq / static_cast<double>(v.size()));
      row.p99_rt_ms = sim::percentile(v, 0.99);
      row.network_pct = sum > 0 ? 100.0 * d_sum[f] / sum : 0.0;
      row.gpu_share_pct = 100.0 * gpu[f] / static_cast<double>(v.size());
    }
    const auto finished = static_cast<double>(row.completed + row.timeouts);
    if (finished > 0) row.violation_pct = 100.0 * (violating[f] + static_cast<double>(row.timeouts)) / finished;
    double mc = 0.0;
    std::size_t count = 0;
    for (const auto& w : windows) {
      if (w.function != f || w.t_end <= meta.warmup_s) continue;
      mc += static_cast<double>(w.allocated_mc);
      ++count;
    }
    if (count > 0) row.mean_mc = mc / static_cast<double>(count);
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    out += r.function + "," + std::to_string(r.requests) + "," + std::to_string(r.completed) + "," +
           std::to_string(r.timeouts) + "," + f6(r.rt_mean_ms) + "," + f6(r.rt_std_ms) + "," +
           f6(r.violation_pct) + "," + f6(r.p99_rt_ms) + "," + f6(r.network_pct) + "," + f6(r.mean_mc) + "," +
           f6(r.gpu_share_pct) + "\n";
  }
  return out;
}

void write_bundle(const std::string& dir, const sim::Scenario& scenario, const sim::MetricsReport& report) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  const auto meta = meta_of(scenario);

  write_file(root / "summary.csv", summary_csv(summarize(meta, report.requests, report.windows)));

  std::string series = std::string(kSeriesHeader) + "\n";
  for (const auto& w : report.windows) {
    series += g17(w.t_end) + "," + meta.functions[w.function] + "," + std::to_string(w.arrivals) + "," +
              std::to_string(w.completions) + "," + std::to_string(w.violations) + "," + g17(w.mean_rt_ms) + "," +
              g17(w.network_pct) + "," + std::to_string(w.allocated_mc) + "," + std::to_string(w.cpu_instances) +
              "," + std::to_string(w.gpu_instances) + "," + std::to_string(w.gpu_completions) + "\n";
  }
  write_file(root / "timeseries.csv", series);

  std::string reqs = std::string(kRequestsHeader) + "\n";
  for (const auto& r : report.requests) {
    reqs += std::to_string(r.id) + "," + meta.functions[r.function] + "," + meta.nodes[r.ingress] + "," +
            (r.node >= 0 ? meta.nodes[static_cast<std::size_t>(r.node)] : std::string()) + "," +
            (r.node >= 0 ? placement::to_string(r.kind) : std::string()) + "," + sim::to_string(r.outcome) + "," +
            g17(r.arrival_s) + "," + g17(r.dispatch_s) + "," + g17(r.start_s) + "," + g17(r.completion_s) + "," +
            g17(r.d_ms) + "," + g17(r.q_ms) + "," + g17(r.e_ms) + "," + g17(r.rt_ms) + "," + g17(r.cpu_core_ms) +
            "," + (r.violated ? "1" : "0") + "\n";
  }
  write_file(root / "requests.csv", reqs);

  std::string events;
  for (const auto& e : report.events) events += e.dump() + "\n";
  write_file(root / "events.jsonl", events);

  nlohmann::json m = {{"format_version", 1},
                      {"scenario", meta.scenario},
                      {"seed", meta.seed},
                      {"duration_s", meta.duration_s},
                      {"warmup_s", meta.warmup_s},
                      {"nodes", meta.nodes},
                      {"functions", meta.functions},
                      {"requests",
                       {{"generated", report.generated},
                        {"completed", report.completed},
                        {"timeouts", report.timeouts},
                        {"in_flight", report.in_flight}}},
                      {"capacity_audit",
                       {{"cpu_checks", report.audit.cpu_checks},
                        {"cpu_violations", report.audit.cpu_violations},
                        {"gpu_checks", report.audit.gpu_checks},
                        {"gpu_violations", report.audit.gpu_violations}}},
                      {"activations", report.activations.size()}};
  write_file(root / "meta.json", m.dump(2) + "\n");
}

Bundle read_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  Bundle b;
  {
    std::ifstream in(root / "meta.json");
    if (!in) throw std::runtime_error((root / "meta.json").string() + ": cannot open");
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(in);
      if (m.at("format_version").get<int>() != 1) throw std::runtime_error("unsupported format_version");
      b.meta.scenario = m.at("scenario").get<std::string>();
      b.meta.seed = m.at("seed").get<std::uint64_t>();
      b.meta.duration_s = m.at("duration_s").get<double>();
      b.meta.warmup_s = m.at("warmup_s").get<double>();
      b.meta.nodes = m.at("nodes").get<std::vector<std::string>>();
      b.meta.functions = m.at("functions").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
      throw std::runtime_error((root / "meta.json").string() + ": " + e.what());
    }
  }
  const auto nodes = index_of(b.meta.nodes);
  const auto fns = index_of(b.meta.functions);

  CsvReader req(root / "requests.csv", kRequestsHeader);
  while (req.next()) {
    sim::RequestRecord r;
    r.id = req.count();
    r.function = req.index(fns);
    r.ingress = req.index(nodes);
    const std::string node = req.cell();
    if (!node.empty()) {
      auto it = nodes.find(node);
      if (it == nodes.end()) req.fail("unknown node '" + node + "'");
      r.node = static_cast<std::int64_t>(it->second);
    }
    const std::string kind = req.cell();
    r.kind = kind == "gpu" ? placement::ResourceKind::gpu : placement::ResourceKind::cpu;
    const std::string outcome = req.cell();
    if (outcome == "completed") {
      r.outcome = sim::Outcome::completed;
    } else if (outcome == "timeout") {
      r.outcome = sim::Outcome::timeout;
    } else if (outcome == "in_flight") {
      r.outcome = sim::Outcome::in_flight;
    } else {
      req.fail("bad outcome '" + outcome + "'");
    }
    r.arrival_s = req.num();
    r.dispatch_s = req.num();
    r.start_s = req.num();
    r.completion_s = req.num();
    r.d_ms = req.num();
    r.q_ms = req.num();
    r.e_ms = req.num();
    r.rt_ms = req.num();
    r.cpu_core_ms = req.num();
    r.violated = req.cell() == "1";
    b.requests.push_back(r);
  }

  CsvReader ts(root / "timeseries.csv", kSeriesHeader);
  while (ts.next()) {
    sim::WindowRow w;
    w.t_end = ts.num();
    w.function = ts.index(fns);
    w.arrivals = ts.count();
    w.completions = ts.count();
    w.violations = ts.count();
    w.mean_rt_ms = ts.num();
    w.network_pct = ts.num();
    w.allocated_mc = static_cast<std::int64_t>(ts.count());
    w.cpu_instances = ts.count();
    w.gpu_instances = ts.count();
    w.gpu_completions = ts.count();
    b.windows.push_back(w);
  }
  return b;
}

}  // namespace mecctl::report
