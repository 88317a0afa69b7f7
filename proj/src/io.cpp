#include "mecctl/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mecctl::io {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::string out = "invalid input:";
  for (const auto& l : lines) out += "\n  " + l;
  return out;
}

// Collects type and presence errors while walking a document.
class Reader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  bool is_object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    error(path, "expected an object");
    return false;
  }

  bool is_array(const json& j, const std::string& path) {
    if (j.is_array()) return true;
    error(path, "expected an array");
    return false;
  }

  void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) return;
    for (const auto& [k, v] : obj.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end()) {
        error(sub(path, k), "unknown field");
      }
    }
  }

  static std::string sub(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  template <typename T>
  bool get(const json& obj, const std::string& path, const char* key, T& out, bool required = false) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) error(sub(path, key), "missing required field");
      return false;
    }
    return convert(obj.at(key), sub(path, key), out);
  }

  bool convert(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) return error(path, "expected a number"), false;
    out = v.get<double>();
    return true;
  }
  bool convert(const json& v, const std::string& path, std::int64_t& out) {
    if (!v.is_number_integer()) return error(path, "expected an integer"), false;
    out = v.get<std::int64_t>();
    return true;
  }
  bool convert(const json& v, const std::string& path, std::uint64_t& out) {
    if (!v.is_number_unsigned()) return error(path, "expected a non-negative integer"), false;
    out = v.get<std::uint64_t>();
    return true;
  }
  bool convert(const json& v, const std::string& path, int& out) {
    std::int64_t i = 0;
    if (!convert(v, path, i)) return false;
    out = static_cast<int>(i);
    return true;
  }
  bool convert(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) return error(path, "expected true or false"), false;
    out = v.get<bool>();
    return true;
  }
  bool convert(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) return error(path, "expected a string"), false;
    out = v.get<std::string>();
    return true;
  }
  template <typename T>
  bool convert(const json& v, const std::string& path, std::optional<T>& out) {
    T value{};
    if (!convert(v, path, value)) return false;
    out = value;
    return true;
  }
};

topology::NodeDescriptor read_node(Reader& r, const json& j, const std::string& path) {
  topology::NodeDescriptor n;
  if (!r.is_object(j, path)) return n;
  r.allow(j, path, {"id", "area", "cpu_mc", "cpu_memory_mb", "gpu_mc", "gpu_memory_mb"});
  r.get(j, path, "id", n.id, true);
  r.get(j, path, "area", n.area);
  r.get(j, path, "cpu_mc", n.cpu_mc, true);
  r.get(j, path, "cpu_memory_mb", n.cpu_memory_mb, true);
  r.get(j, path, "gpu_mc", n.gpu_mc);
  r.get(j, path, "gpu_memory_mb", n.gpu_memory_mb);
  return n;
}

std::vector<topology::NodeDescriptor> read_nodes(Reader& r, const json& doc) {
  std::vector<topology::NodeDescriptor> out;
  if (!doc.contains("nodes")) {
    r.error("nodes", "missing required field");
    return out;
  }
  if (!r.is_array(doc["nodes"], "nodes")) return out;
  for (std::size_t k = 0; k < doc["nodes"].size(); ++k) {
    out.push_back(read_node(r, doc["nodes"][k], "nodes[" + std::to_string(k) + "]"));
  }
  return out;
}

topology::DelayMatrix read_delays(Reader& r, const json& doc, std::size_t n) {
  if (!doc.contains("delays_ms")) {
    r.error("delays_ms", "missing required field");
    return topology::DelayMatrix(n);
  }
  const auto& d = doc["delays_ms"];
  if (!r.is_array(d, "delays_ms")) return topology::DelayMatrix(n);
  if (d.size() != n) {
    r.error("delays_ms", "expected " + std::to_string(n) + " rows, got " + std::to_string(d.size()));
    return topology::DelayMatrix(n);
  }
  topology::DelayMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto path = "delays_ms[" + std::to_string(i) + "]";
    if (!r.is_array(d[i], path)) continue;
    if (d[i].size() != n) {
      r.error(path, "expected " + std::to_string(n) + " entries, got " + std::to_string(d[i].size()));
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) r.convert(d[i][j], path + "[" + std::to_string(j) + "]", m(i, j));
  }
  return m;
}

void read_spec(Reader& r, const json& j, const std::string& path, FunctionSpec& spec) {
  r.get(j, path, "name", spec.name, true);
  r.get(j, path, "cpu_memory_mb", spec.cpu_memory_mb, true);
  r.get(j, path, "gpu_memory_mb", spec.gpu_memory_mb);
  r.get(j, path, "max_net_delay_ms", spec.max_net_delay_ms, true);
  r.get(j, path, "required_rt_ms", spec.required_rt_ms, true);
  r.get(j, path, "cold_start_ms", spec.cold_start_ms);
  r.get(j, path, "graceful_termination_ms", spec.graceful_termination_ms);
}

sim::FunctionConfig read_function(Reader& r, const json& j, const std::string& path) {
  sim::FunctionConfig f;
  if (!r.is_object(j, path)) return f;
  r.allow(j, path,
          {"name", "cpu_memory_mb", "gpu_memory_mb", "max_net_delay_ms", "required_rt_ms", "cold_start_ms",
           "graceful_termination_ms", "setpoint_ms", "max_concurrency", "demand", "noise", "gpu"});
  read_spec(r, j, path, f.spec);
  r.get(j, path, "setpoint_ms", f.setpoint_ms);
  r.get(j, path, "max_concurrency", f.max_concurrency);
  const auto dpath = path + ".demand";
  if (!j.contains("demand")) {
    r.error(dpath, "missing required field");
  } else if (r.is_object(j["demand"], dpath)) {
    const auto& d = j["demand"];
    r.allow(d, dpath, {"dist", "mean_core_ms", "cv"});
    std::string dist = "constant";
    r.get(d, dpath, "dist", dist);
    if (dist == "lognormal") {
      f.demand.dist = sim::DemandModel::Dist::lognormal;
    } else if (dist != "constant") {
      r.error(dpath + ".dist", "expected \"constant\" or \"lognormal\"");
    }
    r.get(d, dpath, "mean_core_ms", f.demand.mean_core_ms, true);
    r.get(d, dpath, "cv", f.demand.cv);
  }
  if (j.contains("noise") && r.is_object(j["noise"], path + ".noise")) {
    r.allow(j["noise"], path + ".noise", {"mean_ms", "cv"});
    r.get(j["noise"], path + ".noise", "mean_ms", f.noise.mean_ms);
    r.get(j["noise"], path + ".noise", "cv", f.noise.cv);
  }
  if (j.contains("gpu") && r.is_object(j["gpu"], path + ".gpu")) {
    const auto gpath = path + ".gpu";
    sim::GpuModel g;
    r.allow(j["gpu"], gpath, {"service_ms", "slot_mc", "usage_core_s"});
    r.get(j["gpu"], gpath, "service_ms", g.service_ms, true);
    r.get(j["gpu"], gpath, "slot_mc", g.slot_mc, true);
    r.get(j["gpu"], gpath, "usage_core_s", g.usage_core_s, true);
    f.gpu = g;
  }
  return f;
}

struct Names {
  std::map<std::string, std::size_t> nodes;
  std::map<std::string, std::size_t> functions;
};

std::size_t lookup(Reader& r, const std::map<std::string, std::size_t>& names, const json& obj,
                   const std::string& path, const char* key, const char* what) {
  std::string name;
  if (!r.get(obj, path, key, name, true)) return 0;
  auto it = names.find(name);
  if (it == names.end()) {
    r.error(Reader::sub(path, key), std::string("unknown ") + what + " '" + name + "'");
    return 0;
  }
  return it->second;
}

void read_think(Reader& r, const json& j, const std::string& path, sim::ThinkModel& t) {
  if (!j.contains("think")) {
    r.error(path + ".think", "missing required field");
    return;
  }
  const auto tpath = path + ".think";
  if (!r.is_object(j["think"], tpath)) return;
  const auto& o = j["think"];
  r.allow(o, tpath, {"model", "mean_s", "rate_per_user"});
  std::string model = "closed";
  r.get(o, tpath, "model", model);
  if (model == "closed") {
    t.closed_loop = true;
    r.get(o, tpath, "mean_s", t.mean_s, true);
  } else if (model == "open") {
    t.closed_loop = false;
    r.get(o, tpath, "rate_per_user", t.rate_per_user, true);
  } else {
    r.error(tpath + ".model", "expected \"closed\" or \"open\"");
  }
}

sim::WorkloadProgram read_program(Reader& r, const json& j, const std::string& path, const Names& names) {
  using Kind = sim::WorkloadProgram::Kind;
  sim::WorkloadProgram w;
  if (!r.is_object(j, path)) return w;
  std::string kind;
  r.get(j, path, "kind", kind, true);
  w.function = lookup(r, names.functions, j, path, "function", "function");
  if (kind == "fixed") {
    w.kind = Kind::fixed;
    r.allow(j, path, {"kind", "function", "node", "rate_rps", "arrivals", "start_s", "end_s"});
    w.node = lookup(r, names.nodes, j, path, "node", "node");
    r.get(j, path, "rate_rps", w.rate_rps, true);
    std::string arrivals = "poisson";
    r.get(j, path, "arrivals", arrivals);
    if (arrivals == "uniform") {
      w.poisson = false;
    } else if (arrivals != "poisson") {
      r.error(path + ".arrivals", "expected \"poisson\" or \"uniform\"");
    }
    r.get(j, path, "start_s", w.start_s);
    r.get(j, path, "end_s", w.end_s);
  } else if (kind == "ramp") {
    w.kind = Kind::ramp;
    r.allow(j, path, {"kind", "function", "nodes", "start_users", "add_per_s", "max_users", "start_s", "think"});
    if (!j.contains("nodes")) {
      r.error(path + ".nodes", "missing required field");
    } else if (r.is_array(j["nodes"], path + ".nodes")) {
      for (std::size_t k = 0; k < j["nodes"].size(); ++k) {
        const auto npath = path + ".nodes[" + std::to_string(k) + "]";
        std::string id;
        if (!r.convert(j["nodes"][k], npath, id)) continue;
        auto it = names.nodes.find(id);
        if (it == names.nodes.end()) {
          r.error(npath, "unknown node '" + id + "'");
        } else {
          w.nodes.push_back(it->second);
        }
      }
    }
    r.get(j, path, "start_users", w.start_users, true);
    r.get(j, path, "add_per_s", w.add_per_s, true);
    r.get(j, path, "max_users", w.max_users, true);
    r.get(j, path, "start_s", w.start_s);
    read_think(r, j, path, w.think);
  } else if (kind == "migration") {
    w.kind = Kind::migration;
    r.allow(j, path, {"kind", "function", "users", "from_area", "moves", "start_s", "think"});
    r.get(j, path, "users", w.users, true);
    r.get(j, path, "from_area", w.from_area, true);
    r.get(j, path, "start_s", w.start_s);
    if (j.contains("moves") && r.is_array(j["moves"], path + ".moves")) {
      for (std::size_t k = 0; k < j["moves"].size(); ++k) {
        const auto mpath = path + ".moves[" + std::to_string(k) + "]";
        const auto& m = j["moves"][k];
        if (!r.is_object(m, mpath)) continue;
        r.allow(m, mpath, {"to_area", "start_s", "window_s"});
        sim::Move mv;
        r.get(m, mpath, "to_area", mv.to_area, true);
        r.get(m, mpath, "start_s", mv.start_s, true);
        r.get(m, mpath, "window_s", mv.window_s, true);
        w.moves.push_back(mv);
      }
    }
    read_think(r, j, path, w.think);
  } else if (kind == "trace") {
    w.kind = Kind::trace;
    r.allow(j, path, {"kind", "function", "arrivals"});
    if (!j.contains("arrivals")) {
      r.error(path + ".arrivals", "missing required field");
    } else if (r.is_array(j["arrivals"], path + ".arrivals")) {
      for (std::size_t k = 0; k < j["arrivals"].size(); ++k) {
        const auto apath = path + ".arrivals[" + std::to_string(k) + "]";
        const auto& a = j["arrivals"][k];
        if (!r.is_object(a, apath)) continue;
        r.allow(a, apath, {"t_s", "node"});
        double t = 0;
        r.get(a, apath, "t_s", t, true);
        w.trace.emplace_back(t, lookup(r, names.nodes, a, apath, "node", "node"));
      }
    }
  } else if (!kind.empty()) {
    r.error(path + ".kind", "expected one of fixed, ramp, migration, trace");
  }
  return w;
}

void read_control(Reader& r, const json& j, sim::ControlConfig& c) {
  const std::string path = "control";
  if (!r.is_object(j, path)) return;
  r.allow(j, path,
          {"node_period_s", "community_period_s", "topology_period_s", "epsilon", "pi", "community",
           "cpu_utilization_target", "gpu_utilization_target", "per_request_cap_mc", "usage_ewma_alpha",
           "retry_window_s", "node_control", "community_control"});
  r.get(j, path, "node_period_s", c.node_period_s);
  r.get(j, path, "community_period_s", c.community_period_s);
  r.get(j, path, "topology_period_s", c.topology_period_s);
  r.get(j, path, "epsilon", c.epsilon);
  r.get(j, path, "cpu_utilization_target", c.cpu_utilization_target);
  r.get(j, path, "gpu_utilization_target", c.gpu_utilization_target);
  r.get(j, path, "per_request_cap_mc", c.per_request_cap_mc);
  r.get(j, path, "usage_ewma_alpha", c.usage_ewma_alpha);
  r.get(j, path, "retry_window_s", c.retry_window_s);
  r.get(j, path, "node_control", c.node_control);
  r.get(j, path, "community_control", c.community_control);
  if (j.contains("pi") && r.is_object(j["pi"], "control.pi")) {
    const auto& p = j["pi"];
    r.allow(p, "control.pi", {"prop_gain", "int_gain", "min_mc", "max_mc"});
    r.get(p, "control.pi", "prop_gain", c.prop_gain);
    r.get(p, "control.pi", "int_gain", c.int_gain);
    r.get(p, "control.pi", "min_mc", c.min_mc);
    r.get(p, "control.pi", "max_mc", c.max_mc);
  }
  if (j.contains("community") && r.is_object(j["community"], "control.community")) {
    const auto& p = j["community"];
    const std::string cpath = "control.community";
    r.allow(p, cpath, {"max_size", "max_delay_ms", "iterations", "label_threshold"});
    r.get(p, cpath, "max_size", c.community.max_community_size);
    r.get(p, cpath, "max_delay_ms", c.community.max_delay_ms);
    r.get(p, cpath, "iterations", c.community.iterations);
    r.get(p, cpath, "label_threshold", c.community.label_threshold);
  }
}

void check_version(Reader& r, const json& doc) {
  int version = 0;
  if (r.get(doc, "", "format_version", version, true) && version != 1) {
    r.error("format_version", "unsupported version " + std::to_string(version));
  }
}

void dedupe_into(std::vector<std::string>& out, const std::vector<std::string>& more) {
  for (const auto& m : more) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
}

}  // namespace

LoadError::LoadError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError({path + ": cannot open file"});
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError({path + ": " + e.what()});
  }
}

LoadedScenario parse_scenario(const json& doc) {
  Reader r;
  LoadedScenario out;
  auto& s = out.scenario;
  if (!doc.is_object()) throw LoadError({"scenario: expected a JSON object"});
  r.allow(doc, "",
          {"format_version", "name", "seed", "duration_s", "nodes", "delays_ms", "functions", "workload", "control",
           "report"});
  check_version(r, doc);
  r.get(doc, "", "name", s.name);
  r.get(doc, "", "seed", s.seed);
  r.get(doc, "", "duration_s", s.duration_s, true);
  if (doc.contains("report") && r.is_object(doc["report"], "report")) {
    r.allow(doc["report"], "report", {"warmup_s"});
    r.get(doc["report"], "report", "warmup_s", s.warmup_s);
  }
  s.nodes = read_nodes(r, doc);
  s.delays = read_delays(r, doc, s.nodes.size());

  Names names;
  for (std::size_t j = 0; j < s.nodes.size(); ++j) names.nodes.emplace(s.nodes[j].id, j);
  if (!doc.contains("functions")) {
    r.error("functions", "missing required field");
  } else if (r.is_array(doc["functions"], "functions")) {
    for (std::size_t f = 0; f < doc["functions"].size(); ++f) {
      s.functions.push_back(read_function(r, doc["functions"][f], "functions[" + std::to_string(f) + "]"));
      names.functions.emplace(s.functions.back().spec.name, f);
    }
  }
  if (doc.contains("workload") && r.is_array(doc["workload"], "workload")) {
    for (std::size_t w = 0; w < doc["workload"].size(); ++w) {
      s.workload.push_back(read_program(r, doc["workload"][w], "workload[" + std::to_string(w) + "]", names));
    }
  }
  if (doc.contains("control")) read_control(r, doc["control"], s.control);

  auto problems = r.errors;
  dedupe_into(problems, sim::validate_scenario(s));
  if (!problems.empty()) throw LoadError(problems);
  out.warnings = sim::scenario_warnings(s);
  return out;
}

LoadedScenario load_scenario(const std::string& path) { return parse_scenario(read_json(path)); }

Snapshot parse_snapshot(const json& doc) {
  Reader r;
  Snapshot snap;
  auto& st = snap.state;
  if (!doc.is_object()) throw LoadError({"snapshot: expected a JSON object"});
  r.allow(doc, "", {"format_version", "nodes", "delays_ms", "functions", "previous", "config"});
  check_version(r, doc);
  st.nodes = read_nodes(r, doc);
  const std::size_t n = st.nodes.size();
  st.delays = read_delays(r, doc, n);
  std::map<std::string, std::size_t> node_ids, fn_ids;
  for (std::size_t j = 0; j < n; ++j) node_ids.emplace(st.nodes[j].id, j);

  auto per_node = [&](const json& j, const std::string& path, const char* key, std::vector<double>& out,
                      bool required) {
    out.assign(n, 0.0);
    if (!j.contains(key)) {
      if (required) r.error(Reader::sub(path, key), "missing required field");
      return;
    }
    const auto& v = j[key];
    const auto kpath = Reader::sub(path, key);
    if (v.is_number()) {
      std::fill(out.begin(), out.end(), v.get<double>());
      return;
    }
    if (!r.is_array(v, kpath)) return;
    if (v.size() != n) {
      r.error(kpath, "expected " + std::to_string(n) + " entries");
      return;
    }
    for (std::size_t k = 0; k < n; ++k) r.convert(v[k], kpath + "[" + std::to_string(k) + "]", out[k]);
  };

  if (!doc.contains("functions")) {
    r.error("functions", "missing required field");
  } else if (r.is_array(doc["functions"], "functions")) {
    for (std::size_t f = 0; f < doc["functions"].size(); ++f) {
      const auto path = "functions[" + std::to_string(f) + "]";
      const auto& j = doc["functions"][f];
      FunctionSpec spec;
      std::vector<double> load, cpu_u, gpu_u;
      if (r.is_object(j, path)) {
        r.allow(j, path,
                {"name", "cpu_memory_mb", "gpu_memory_mb", "max_net_delay_ms", "required_rt_ms", "cold_start_ms",
                 "graceful_termination_ms", "workload_rps", "cpu_usage_core_s", "gpu_usage_core_s"});
        read_spec(r, j, path, spec);
        per_node(j, path, "workload_rps", load, true);
        per_node(j, path, "cpu_usage_core_s", cpu_u, true);
        per_node(j, path, "gpu_usage_core_s", gpu_u, spec.gpu_memory_mb.has_value());
        for (const auto& e : validate_function(spec)) r.error(path, e);
      }
      fn_ids.emplace(spec.name, f);
      st.functions.push_back(spec);
      st.workload.push_back(load);
      st.cpu_usage.push_back(cpu_u);
      st.gpu_usage.push_back(gpu_u);
    }
  }
  const std::size_t nf = st.functions.size();
  snap.previous_gpu.assign(nf, std::vector<int>(n, 0));
  snap.previous_cpu.assign(nf, std::vector<int>(n, 0));
  if (doc.contains("previous") && r.is_object(doc["previous"], "previous")) {
    r.allow(doc["previous"], "previous", {"cpu", "gpu"});
    for (const char* kind : {"cpu", "gpu"}) {
      const auto kpath = std::string("previous.") + kind;
      if (!doc["previous"].contains(kind) || !r.is_array(doc["previous"][kind], kpath)) continue;
      auto& target = std::string(kind) == "cpu" ? snap.previous_cpu : snap.previous_gpu;
      const auto& list = doc["previous"][kind];
      for (std::size_t k = 0; k < list.size(); ++k) {
        const auto epath = kpath + "[" + std::to_string(k) + "]";
        if (!r.is_object(list[k], epath)) continue;
        r.allow(list[k], epath, {"function", "node"});
        std::string fname, nid;
        r.get(list[k], epath, "function", fname, true);
        r.get(list[k], epath, "node", nid, true);
        if (!fn_ids.count(fname)) {
          r.error(epath + ".function", "unknown function '" + fname + "'");
        } else if (!node_ids.count(nid)) {
          r.error(epath + ".node", "unknown node '" + nid + "'");
        } else {
          target[fn_ids[fname]][node_ids[nid]] = 1;
        }
      }
    }
  }
  if (doc.contains("config") && r.is_object(doc["config"], "config")) {
    r.allow(doc["config"], "config", {"epsilon", "cpu_utilization_target", "gpu_utilization_target"});
    r.get(doc["config"], "config", "epsilon", snap.config.epsilon);
    r.get(doc["config"], "config", "cpu_utilization_target", snap.config.cpu_utilization_target);
    r.get(doc["config"], "config", "gpu_utilization_target", snap.config.gpu_utilization_target);
  }
  auto problems = r.errors;
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& e : topology::validate_node(st.nodes[j])) problems.push_back("nodes[" + std::to_string(j) + "]: " + e);
  }
  for (const auto& e : st.delays.validate()) problems.push_back("delays_ms" + e);
  if (problems.empty()) {
    for (const auto& e : placement::validate_state(st)) problems.push_back("snapshot: " + e);
  }
  if (!problems.empty()) throw LoadError(problems);
  return snap;
}

Snapshot load_snapshot(const std::string& path) { return parse_snapshot(read_json(path)); }

}  // namespace mecctl::io
