#pragma once

// Random small community instances for oracle comparisons.

#include <random>

#include "mecctl/placement.hpp"

namespace instances {

using mecctl::placement::CommunityState;

inline CommunityState random_community(std::mt19937_64& rng, std::size_t nodes,
                                       std::size_t functions, bool with_gpu) {
  std::uniform_int_distribution<int> cpu(10, 40), mem(2, 10), delay(1, 60), phi(10, 100);
  std::uniform_real_distribution<double> use(0.02, 0.2), unit(0.0, 1.0);
  CommunityState s;
  for (std::size_t j = 0; j < nodes; ++j) {
    mecctl::topology::NodeDescriptor n;
    n.id = "n" + std::to_string(j);
    n.cpu_mc = cpu(rng) * 100;
    n.cpu_memory_mb = mem(rng) * 100.0;
    if (with_gpu && (j == 0 || unit(rng) < 0.3)) {
      n.gpu_mc = cpu(rng) * 50;
      n.gpu_memory_mb = mem(rng) * 100.0;
    }
    s.nodes.push_back(n);
  }
  s.delays = mecctl::topology::DelayMatrix(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = 0; j < nodes; ++j) {
      if (i != j) s.delays(i, j) = delay(rng);
    }
  }
  for (std::size_t f = 0; f < functions; ++f) {
    mecctl::FunctionSpec spec;
    spec.name = "f" + std::to_string(f);
    spec.cpu_memory_mb = mem(rng) * 60.0;
    if (with_gpu && unit(rng) < 0.6) spec.gpu_memory_mb = mem(rng) * 50.0;
    spec.max_net_delay_ms = phi(rng);
    spec.required_rt_ms = 200;
    s.functions.push_back(spec);
  }
  s.workload.assign(functions, std::vector<double>(nodes, 0.0));
  s.cpu_usage.assign(functions, std::vector<double>(nodes, 0.0));
  s.gpu_usage.assign(functions, std::vector<double>(nodes, 0.0));
  for (std::size_t f = 0; f < functions; ++f) {
    const double base = use(rng);
    for (std::size_t j = 0; j < nodes; ++j) {
      if (unit(rng) < 0.75) s.workload[f][j] = std::floor(unit(rng) * 20.0 * 10.0) / 10.0;
      s.cpu_usage[f][j] = base * (0.8 + 0.4 * unit(rng));
      s.gpu_usage[f][j] = base * 0.5;
    }
  }
  return s;
}

// Random previous placement over every (function, node) pair.
inline mecctl::placement::Deployed random_deployed(std::mt19937_64& rng, const CommunityState& s) {
  mecctl::placement::Deployed d(s.functions.size(), std::vector<int>(s.nodes.size(), 0));
  for (auto& row : d) {
    for (auto& v : row) v = static_cast<int>(rng() % 2);
  }
  return d;
}

}  // namespace instances
