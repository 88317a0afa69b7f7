#pragma once

// Node-level vertical scaling: one PI controller per function instance and a
// per-node contention manager that fits the requested cores into capacity.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mecctl/function_spec.hpp"

namespace mecctl::nodectl {

inline constexpr double kDefaultPropGain = 50.0;   // mc per 1/s of error
inline constexpr double kDefaultIntGain = 100.0;
inline constexpr std::int64_t kDefaultMinCores = 50;

struct PiControllerState {
  double setpoint_ms = 0.0;
  double prev_error = 0.0;  // 1/s
  double prop_gain = kDefaultPropGain;
  double int_gain = kDefaultIntGain;
  std::int64_t min_cores = kDefaultMinCores;  // millicores
  std::int64_t max_cores = 0;
};

std::vector<std::string> validate_state(const PiControllerState& state);

struct PiStep {
  PiControllerState state;
  std::int64_t desired_cores = 0;  // millicores
};

// One controller step. An empty measurement (no completions in the window)
// holds the current allocation and leaves the stored error untouched. The
// desired value is rounded to the nearest millicore before clamping.
PiStep compute_instance_cores(const PiControllerState& state, std::optional<double> qe_measured_ms,
                              std::int64_t current_cores);

struct AllocationRequest {
  std::uint64_t instance = 0;
  std::int64_t desired_cores = 0;
};

// Granted millicores, in request order. When the requests do not fit they are
// scaled proportionally and floored; leftover millicores go to the largest
// remainders, ties to the lowest instance id. Throws std::invalid_argument on
// a non-positive capacity or a negative request.
std::vector<std::int64_t> resolve_contention(std::span<const AllocationRequest> requests,
                                             std::int64_t capacity);

inline double default_setpoint(const FunctionSpec& spec) { return spec.required_rt_ms / 2.0; }

}  // namespace mecctl::nodectl
