#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mecctl {

struct FunctionSpec {
  std::string name;
  double cpu_memory_mb = 0.0;
  std::optional<double> gpu_memory_mb;  // set iff the function can run on a GPU
  double max_net_delay_ms = 0.0;        // phi
  double required_rt_ms = 0.0;
  double cold_start_ms = 0.0;
  double graceful_termination_ms = 0.0;

  bool gpu_capable() const { return gpu_memory_mb.has_value(); }
};

std::vector<std::string> validate_function(const FunctionSpec& spec);

}  // namespace mecctl
