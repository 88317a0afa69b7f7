#pragma once

// MEC node network and its partition into communities: disjoint node groups
// whose size is bounded by a maximum community size and whose pairwise
// delays are bounded by a maximum delay.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mecctl::topology {

struct NodeDescriptor {
  std::string id;
  std::int64_t cpu_mc = 0;       // CPU capacity, millicores
  double cpu_memory_mb = 0.0;
  std::int64_t gpu_mc = 0;       // GPU capacity, GPU millicores; 0 if none
  double gpu_memory_mb = 0.0;
  std::string area;

  bool has_gpu() const { return gpu_mc > 0; }
};

// Human-readable problems with a node description; empty when valid.
std::vector<std::string> validate_node(const NodeDescriptor& node);

// Dense inter-node round-trip delays in milliseconds. Not necessarily
// symmetric.
class DelayMatrix {
 public:
  DelayMatrix() = default;
  explicit DelayMatrix(std::size_t n, double fill = 0.0);
  explicit DelayMatrix(const std::vector<std::vector<double>>& rows);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

  // Larger of the two directed delays between i and j.
  double pair_max(std::size_t i, std::size_t j) const {
    const double a = (*this)(i, j);
    const double b = (*this)(j, i);
    return a > b ? a : b;
  }

  DelayMatrix submatrix(std::span<const std::size_t> nodes) const;

  // Problems such as a non-zero diagonal or negative entries; empty when valid.
  std::vector<std::string> validate() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct CommunityParams {
  std::size_t max_community_size = 1;
  double max_delay_ms = 0.0;
  std::size_t iterations = 20;
  double label_threshold = 0.3;
  std::uint64_t rng_seed = 0;
};

std::vector<std::string> validate_params(const CommunityParams& params);

struct Community {
  std::vector<std::size_t> members;  // sorted node indices

  friend bool operator==(const Community&, const Community&) = default;
};

// Speaker-listener label propagation over the graph whose edges join nodes
// within max_delay of each other. Label groups that exceed the size bound or
// span a pair farther apart than max_delay are split greedily. The result
// covers every node and may overlap.
std::vector<Community> slpa_partition(std::span<const NodeDescriptor> nodes,
                                      const DelayMatrix& delays,
                                      const CommunityParams& params);

// Assigns every node shared by several communities to the candidate with the
// smallest mean delay to its other members (ties to the earlier community),
// skipping candidates already at the size bound. A node with no admissible
// candidate becomes a singleton. Empty communities are dropped.
std::vector<Community> resolve_overlaps(const std::vector<Community>& communities,
                                        const DelayMatrix& delays,
                                        const CommunityParams& params);

struct PartitionViolation {
  enum class Kind { empty, unknown_node, overlap, uncovered, size, delay };
  Kind kind;
  std::string detail;
};

const char* to_string(PartitionViolation::Kind kind);

// Empty iff the communities are disjoint, cover every node of `delays`, and
// satisfy both bounds. A delay violation is reported once per unordered pair.
std::vector<PartitionViolation> validate_partition(const std::vector<Community>& communities,
                                                   const DelayMatrix& delays,
                                                   const CommunityParams& params);

// Repeatedly joins the pair of communities with the smallest mean delay whose
// union still satisfies both bounds. Result is sorted by member list.
std::vector<Community> merge_communities(std::vector<Community> communities, const DelayMatrix& delays,
                                         const CommunityParams& params);

// slpa_partition, resolve_overlaps, then merge_communities.
std::vector<Community> partition(std::span<const NodeDescriptor> nodes,
                                 const DelayMatrix& delays, const CommunityParams& params);

}  // namespace mecctl::topology
