#include "mecctl/nodectl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mecctl {

std::vector<std::string> validate_function(const FunctionSpec& spec) {
  std::vector<std::string> out;
  if (spec.name.empty()) out.push_back("name is empty");
  if (!(spec.cpu_memory_mb > 0)) out.push_back("memory_mb must be > 0");
  if (spec.gpu_memory_mb && !(*spec.gpu_memory_mb > 0)) out.push_back("gpu_memory_mb must be > 0");
  if (!(spec.max_net_delay_ms >= 0) || !std::isfinite(spec.max_net_delay_ms)) {
    out.push_back("max_delay_ms must be finite and >= 0");
  }
  if (!(spec.required_rt_ms > 0) || !std::isfinite(spec.required_rt_ms)) {
    out.push_back("required_rt_ms must be finite and > 0");
  }
  if (!(spec.cold_start_ms >= 0)) out.push_back("cold_start_ms must be >= 0");
  if (!(spec.graceful_termination_ms >= 0)) out.push_back("graceful_termination_ms must be >= 0");
  return out;
}

}  // namespace mecctl

namespace mecctl::nodectl {

std::vector<std::string> validate_state(const PiControllerState& s) {
  std::vector<std::string> out;
  if (!(s.setpoint_ms > 0)) out.push_back("setpoint must be > 0");
  if (s.min_cores <= 0) out.push_back("min_cores must be > 0");
  if (s.max_cores < s.min_cores) out.push_back("max_cores must be >= min_cores");
  if (!std::isfinite(s.prop_gain) || !std::isfinite(s.int_gain)) out.push_back("gains must be finite");
  return out;
}

PiStep compute_instance_cores(const PiControllerState& state, std::optional<double> qe_measured_ms,
                              std::int64_t current_cores) {
  PiStep step{state, std::clamp(current_cores, state.min_cores, state.max_cores)};
  if (!qe_measured_ms || !(*qe_measured_ms > 0)) return step;

  const double err = 1000.0 / state.setpoint_ms - 1000.0 / *qe_measured_ms;
  const double int_old = static_cast<double>(current_cores) - state.int_gain * state.prev_error;
  const double integral = int_old + state.int_gain * err;
  const double prop = state.prop_gain * err;
  const double desired = std::round(integral + prop);
  const double lo = static_cast<double>(state.min_cores);
  const double hi = static_cast<double>(state.max_cores);
  step.desired_cores = static_cast<std::int64_t>(std::clamp(desired, lo, hi));
  step.state.prev_error = err;
  return step;
}

std::vector<std::int64_t> resolve_contention(std::span<const AllocationRequest> requests,
                                             std::int64_t capacity) {
  if (capacity <= 0) throw std::invalid_argument("node capacity must be positive");
  std::int64_t total = 0;
  for (const auto& r : requests) {
    if (r.desired_cores < 0) throw std::invalid_argument("negative core request");
    total += r.desired_cores;
  }
  std::vector<std::int64_t> granted(requests.size());
  if (total <= capacity) {
    for (std::size_t i = 0; i < requests.size(); ++i) granted[i] = requests[i].desired_cores;
    return granted;
  }

  std::vector<std::int64_t> remainder(requests.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto scaled = static_cast<__int128>(requests[i].desired_cores) * capacity;
    granted[i] = static_cast<std::int64_t>(scaled / total);
    remainder[i] = static_cast<std::int64_t>(scaled % total);
    assigned += granted[i];
  }
  std::vector<std::size_t> order(requests.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return requests[a].instance < requests[b].instance;
  });
  for (std::size_t k = 0; assigned < capacity && k < order.size(); ++k, ++assigned) {
    ++granted[order[k]];
  }
  return granted;
}

}  // namespace mecctl::nodectl
