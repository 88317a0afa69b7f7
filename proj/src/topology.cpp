#include "mecctl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "mecctl/random.hpp"

namespace mecctl::topology {

std::vector<std::string> validate_node(const NodeDescriptor& node) {
  std::vector<std::string> errors;
  if (node.id.empty()) errors.push_back("id is empty");
  if (node.cpu_mc <= 0) errors.push_back("cpu_mc must be > 0");
  if (!(node.cpu_memory_mb > 0.0)) errors.push_back("memory_mb must be > 0");
  if (node.gpu_mc < 0) errors.push_back("gpu_mc must be >= 0");
  if (!(node.gpu_memory_mb >= 0.0)) errors.push_back("gpu_memory_mb must be >= 0");
  if ((node.gpu_mc > 0) != (node.gpu_memory_mb > 0.0)) {
    errors.push_back("gpu_mc and gpu_memory_mb must be both positive or both zero");
  }
  return errors;
}

DelayMatrix::DelayMatrix(std::size_t n, double fill) : n_(n), data_(n * n, fill) {
  for (std::size_t i = 0; i < n; ++i) data_[i * n + i] = 0.0;
}

DelayMatrix::DelayMatrix(const std::vector<std::vector<double>>& rows)
    : n_(rows.size()), data_(rows.size() * rows.size(), 0.0) {
  for (std::size_t i = 0; i < n_; ++i) {
    if (rows[i].size() != n_) throw std::invalid_argument("delay matrix is not square");
    for (std::size_t j = 0; j < n_; ++j) data_[i * n_ + j] = rows[i][j];
  }
}

DelayMatrix DelayMatrix::submatrix(std::span<const std::size_t> nodes) const {
  DelayMatrix out(nodes.size());
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = 0; b < nodes.size(); ++b) out(a, b) = (*this)(nodes[a], nodes[b]);
  }
  return out;
}

std::vector<std::string> DelayMatrix::validate() const {
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      const double d = (*this)(i, j);
      const std::string cell = "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
      if (!std::isfinite(d)) {
        errors.push_back(cell + ": delay is not finite");
      } else if (d < 0.0) {
        errors.push_back(cell + ": negative delay " + std::to_string(d));
      } else if (i == j && d != 0.0) {
        errors.push_back(cell + ": diagonal delay must be 0");
      }
    }
  }
  return errors;
}

std::vector<std::string> validate_params(const CommunityParams& params) {
  std::vector<std::string> errors;
  if (params.max_community_size < 1) errors.push_back("max_community_size must be >= 1");
  if (params.iterations < 1) errors.push_back("iterations must be >= 1");
  if (!(params.label_threshold > 0.0 && params.label_threshold <= 1.0)) {
    errors.push_back("label_threshold must be in (0, 1]");
  }
  if (!(params.max_delay_ms >= 0.0)) errors.push_back("max_delay_ms must be >= 0");
  return errors;
}

namespace {

bool delay_feasible(const std::vector<std::size_t>& members, const DelayMatrix& delays,
                    double max_delay) {
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      if (delays.pair_max(members[a], members[b]) > max_delay) return false;
    }
  }
  return true;
}

double round_trip(const DelayMatrix& delays, std::size_t i, std::size_t j) {
  return delays(i, j) + delays(j, i);
}

// Greedy extraction of Δ-feasible chunks of at most `max_size` nodes: seed with
// the node of lowest total delay to the rest, then add the compatible node
// that increases internal delay least.
std::vector<std::vector<std::size_t>> split_group(std::vector<std::size_t> remaining,
                                                  const DelayMatrix& delays,
                                                  const CommunityParams& params) {
  std::vector<std::vector<std::size_t>> out;
  while (!remaining.empty()) {
    std::size_t seed = remaining.front();
    double seed_total = INFINITY;
    for (std::size_t cand : remaining) {
      double total = 0.0;
      for (std::size_t other : remaining) total += round_trip(delays, cand, other);
      if (total < seed_total) {
        seed_total = total;
        seed = cand;
      }
    }
    std::vector<std::size_t> chunk{seed};
    while (chunk.size() < params.max_community_size) {
      std::size_t pick = delays.size();
      double pick_cost = INFINITY;
      for (std::size_t cand : remaining) {
        if (std::find(chunk.begin(), chunk.end(), cand) != chunk.end()) continue;
        bool compatible = true;
        double cost = 0.0;
        for (std::size_t m : chunk) {
          if (delays.pair_max(cand, m) > params.max_delay_ms) {
            compatible = false;
            break;
          }
          cost += round_trip(delays, cand, m);
        }
        if (compatible && cost < pick_cost) {
          pick_cost = cost;
          pick = cand;
        }
      }
      if (pick == delays.size()) break;
      chunk.push_back(pick);
    }
    std::sort(chunk.begin(), chunk.end());
    std::erase_if(remaining, [&](std::size_t v) {
      return std::binary_search(chunk.begin(), chunk.end(), v);
    });
    out.push_back(std::move(chunk));
  }
  return out;
}

}  // namespace

std::vector<Community> slpa_partition(std::span<const NodeDescriptor> nodes,
                                      const DelayMatrix& delays,
                                      const CommunityParams& params) {
  const std::size_t n = delays.size();
  if (nodes.size() != n) {
    throw std::invalid_argument("slpa_partition: node count does not match the delay matrix");
  }
  if (auto errors = validate_params(params); !errors.empty()) {
    throw std::invalid_argument("slpa_partition: " + errors.front());
  }
  if (n == 0) return {};

  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && delays.pair_max(i, j) <= params.max_delay_ms) neighbors[i].push_back(j);
    }
  }

  Rng rng(derive_seed(params.rng_seed, 0x51a9));
  std::vector<std::vector<std::size_t>> memory(n);
  for (std::size_t i = 0; i < n; ++i) memory[i].push_back(i);

  std::vector<std::size_t> order(n);
  std::map<std::size_t, std::size_t> received;
  for (std::size_t iter = 0; iter < params.iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    for (std::size_t listener : order) {
      if (neighbors[listener].empty()) continue;
      received.clear();
      for (std::size_t speaker : neighbors[listener]) {
        const auto& mem = memory[speaker];
        ++received[mem[rng.index(mem.size())]];
      }
      std::size_t chosen = received.begin()->first;
      std::size_t best = 0;
      for (const auto& [label, count] : received) {
        if (count > best) {
          best = count;
          chosen = label;
        }
      }
      memory[listener].push_back(chosen);
    }
  }

  // Post-processing: a node joins every label whose frequency in its memory
  // reaches the threshold, or its most frequent label if none does.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t label : memory[i]) ++counts[label];
    const double total = static_cast<double>(memory[i].size());
    bool joined = false;
    for (const auto& [label, count] : counts) {
      if (static_cast<double>(count) / total >= params.label_threshold) {
        groups[label].push_back(i);
        joined = true;
      }
    }
    if (!joined) {
      std::size_t chosen = counts.begin()->first;
      std::size_t best = 0;
      for (const auto& [label, count] : counts) {
        if (count > best) {
          best = count;
          chosen = label;
        }
      }
      groups[chosen].push_back(i);
    }
  }

  std::set<std::vector<std::size_t>> unique;
  for (auto& [label, members] : groups) {
    if (members.size() <= params.max_community_size &&
        delay_feasible(members, delays, params.max_delay_ms)) {
      unique.insert(members);
      continue;
    }
    for (auto& chunk : split_group(members, delays, params)) unique.insert(std::move(chunk));
  }

  std::vector<Community> out;
  out.reserve(unique.size());
  for (const auto& members : unique) out.push_back({members});
  return out;
}

std::vector<Community> resolve_overlaps(const std::vector<Community>& communities,
                                        const DelayMatrix& delays,
                                        const CommunityParams& params) {
  std::map<std::size_t, std::vector<std::size_t>> owners;
  for (std::size_t c = 0; c < communities.size(); ++c) {
    for (std::size_t v : communities[c].members) owners[v].push_back(c);
  }

  std::vector<std::vector<std::size_t>> current(communities.size());
  for (std::size_t c = 0; c < communities.size(); ++c) {
    for (std::size_t v : communities[c].members) {
      if (owners[v].size() == 1) current[c].push_back(v);
    }
  }

  std::vector<std::vector<std::size_t>> singletons;
  for (const auto& [node, cands] : owners) {
    if (cands.size() < 2) continue;
    struct Candidate {
      double mean;
      std::size_t id;
    };
    std::vector<Candidate> ranked;
    for (std::size_t c : cands) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t m : communities[c].members) {
        if (m == node) continue;
        sum += 0.5 * round_trip(delays, node, m);
        ++count;
      }
      ranked.push_back({count ? sum / static_cast<double>(count) : 0.0, c});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
      return a.mean < b.mean || (a.mean == b.mean && a.id < b.id);
    });
    bool placed = false;
    for (const auto& cand : ranked) {
      if (current[cand.id].size() < params.max_community_size) {
        current[cand.id].push_back(node);
        placed = true;
        break;
      }
    }
    if (!placed) singletons.push_back({node});
  }

  std::vector<Community> out;
  for (auto& members : current) {
    if (members.empty()) continue;
    std::sort(members.begin(), members.end());
    out.push_back({std::move(members)});
  }
  for (auto& s : singletons) out.push_back({std::move(s)});
  return out;
}

const char* to_string(PartitionViolation::Kind kind) {
  switch (kind) {
    case PartitionViolation::Kind::empty:
      return "empty";
    case PartitionViolation::Kind::unknown_node:
      return "unknown_node";
    case PartitionViolation::Kind::overlap:
      return "overlap";
    case PartitionViolation::Kind::uncovered:
      return "uncovered";
    case PartitionViolation::Kind::size:
      return "size";
    case PartitionViolation::Kind::delay:
      return "delay";
  }
  return "unknown";
}

std::vector<PartitionViolation> validate_partition(const std::vector<Community>& communities,
                                                   const DelayMatrix& delays,
                                                   const CommunityParams& params) {
  using Kind = PartitionViolation::Kind;
  std::vector<PartitionViolation> out;
  const std::size_t n = delays.size();
  std::vector<std::size_t> seen(n, 0);
  for (std::size_t c = 0; c < communities.size(); ++c) {
    const auto& members = communities[c].members;
    const std::string tag = "community " + std::to_string(c);
    if (members.empty()) out.push_back({Kind::empty, tag + " is empty"});
    if (members.size() > params.max_community_size) {
      out.push_back({Kind::size, tag + " has " + std::to_string(members.size()) +
                                     " members (max " +
                                     std::to_string(params.max_community_size) + ")"});
    }
    for (std::size_t a = 0; a < members.size(); ++a) {
      if (members[a] >= n) {
        out.push_back({Kind::unknown_node, tag + " references node " + std::to_string(members[a])});
        continue;
      }
      ++seen[members[a]];
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        if (members[b] >= n) continue;
        if (delays.pair_max(members[a], members[b]) > params.max_delay_ms) {
          out.push_back({Kind::delay, tag + ": nodes " + std::to_string(members[a]) + " and " +
                                          std::to_string(members[b]) + " exceed max delay"});
        }
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (seen[v] == 0) {
      out.push_back({Kind::uncovered, "node " + std::to_string(v) + " is in no community"});
    } else if (seen[v] > 1) {
      out.push_back({Kind::overlap, "node " + std::to_string(v) + " is in " +
                                        std::to_string(seen[v]) + " communities"});
    }
  }
  return out;
}

std::vector<Community> merge_communities(std::vector<Community> communities, const DelayMatrix& delays,
                                         const CommunityParams& params) {
  auto mean_delay = [&](const Community& a, const Community& b) {
    double sum = 0.0;
    for (auto i : a.members) {
      for (auto j : b.members) sum += (delays(i, j) + delays(j, i)) / 2.0;
    }
    return sum / static_cast<double>(a.members.size() * b.members.size());
  };
  for (;;) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    double best_delay = 0.0;
    for (std::size_t a = 0; a < communities.size(); ++a) {
      for (std::size_t b = a + 1; b < communities.size(); ++b) {
        if (communities[a].members.size() + communities[b].members.size() > params.max_community_size) continue;
        std::vector<std::size_t> joined = communities[a].members;
        joined.insert(joined.end(), communities[b].members.begin(), communities[b].members.end());
        if (!delay_feasible(joined, delays, params.max_delay_ms)) continue;
        const double d = mean_delay(communities[a], communities[b]);
        if (!best || d < best_delay) {
          best = {a, b};
          best_delay = d;
        }
      }
    }
    if (!best) break;
    auto& into = communities[best->first].members;
    const auto& from = communities[best->second].members;
    into.insert(into.end(), from.begin(), from.end());
    std::sort(into.begin(), into.end());
    communities.erase(communities.begin() + static_cast<std::ptrdiff_t>(best->second));
  }
  std::sort(communities.begin(), communities.end(),
            [](const Community& x, const Community& y) { return x.members < y.members; });
  return communities;
}

std::vector<Community> partition(std::span<const NodeDescriptor> nodes,
                                 const DelayMatrix& delays, const CommunityParams& params) {
  return merge_communities(resolve_overlaps(slpa_partition(nodes, delays, params), delays, params), delays,
                           params);
}

}  // namespace mecctl::topology
