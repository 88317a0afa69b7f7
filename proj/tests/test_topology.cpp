#include <chrono>
#include <random>

#include "doctest.h"
#include "mecctl/topology.hpp"

using namespace mecctl::topology;

namespace {

std::vector<NodeDescriptor> make_nodes(std::size_t n) {
  std::vector<NodeDescriptor> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].id = "n" + std::to_string(i);
    nodes[i].cpu_mc = 1000;
    nodes[i].cpu_memory_mb = 1024;
  }
  return nodes;
}

DelayMatrix two_cliques() {
  DelayMatrix d(6, 200.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (i == j) continue;
      if ((i < 3) == (j < 3)) d(i, j) = 5.0;
    }
  }
  return d;
}

// Random planar-ish topology: nodes on a 200x200 ms grid, delay = distance
// plus jitter; asymmetric by a few ms.
DelayMatrix random_topology(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> pos(0.0, 200.0);
  std::uniform_real_distribution<double> jitter(0.0, 4.0);
  std::vector<std::pair<double, double>> xy(n);
  for (auto& p : xy) p = {pos(rng), pos(rng)};
  DelayMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      d(i, j) = std::hypot(xy[i].first - xy[j].first, xy[i].second - xy[j].second) + jitter(rng);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("slpa: single node yields one singleton") {
  auto nodes = make_nodes(1);
  CommunityParams p{.max_community_size = 3, .max_delay_ms = 10};
  auto out = slpa_partition(nodes, DelayMatrix(1), p);
  REQUIRE(out.size() == 1);
  CHECK(out[0].members == std::vector<std::size_t>{0});
}

TEST_CASE("slpa: two distant cliques stay separate") {
  const auto d = two_cliques();
  CommunityParams p{.max_community_size = 5, .max_delay_ms = 50};

  // Exhaustive check: no Δ-feasible node subset contains nodes of both cliques.
  for (unsigned mask = 1; mask < 64; ++mask) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < 6; ++i) {
      if (mask & (1U << i)) members.push_back(i);
    }
    const bool spans = (mask & 0b000111U) && (mask & 0b111000U);
    bool feasible = true;
    for (auto a : members) {
      for (auto b : members) feasible = feasible && d.pair_max(a, b) <= p.max_delay_ms;
    }
    CHECK_FALSE((spans && feasible));
  }

  auto nodes = make_nodes(6);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    p.rng_seed = seed;
    auto out = partition(nodes, d, p);
    REQUIRE(out.size() == 2);
    CHECK(out[0].members == std::vector<std::size_t>{0, 1, 2});
    CHECK(out[1].members == std::vector<std::size_t>{3, 4, 5});
  }
}

TEST_CASE("slpa: fully connected topology is covered") {
  const std::size_t n = 7;
  auto nodes = make_nodes(n);
  DelayMatrix d(n, 3.0);
  CommunityParams p{.max_community_size = n, .max_delay_ms = 10};
  auto raw = slpa_partition(nodes, d, p);
  std::vector<int> covered(n, 0);
  for (const auto& c : raw) {
    for (auto v : c.members) covered[v] = 1;
  }
  for (auto v : covered) CHECK(v == 1);
  CHECK(validate_partition(resolve_overlaps(raw, d, p), d, p).empty());
}

TEST_CASE("slpa: isolated node becomes a singleton") {
  auto nodes = make_nodes(3);
  DelayMatrix d(3, 5.0);
  d(2, 0) = d(0, 2) = d(2, 1) = d(1, 2) = 500.0;
  CommunityParams p{.max_community_size = 3, .max_delay_ms = 20};
  auto out = partition(nodes, d, p);
  REQUIRE(out.size() == 2);
  CHECK(out[1].members == std::vector<std::size_t>{2});
}

TEST_CASE("slpa: oversized label groups are split within MCS") {
  const std::size_t n = 9;
  auto nodes = make_nodes(n);
  DelayMatrix d(n, 2.0);
  CommunityParams p{.max_community_size = 4, .max_delay_ms = 10};
  auto raw = slpa_partition(nodes, d, p);
  for (const auto& c : raw) CHECK(c.members.size() <= 4);
  CHECK(validate_partition(resolve_overlaps(raw, d, p), d, p).empty());
}

TEST_CASE("slpa: chains connected only through neighbours respect max delay") {
  // Line topology: consecutive nodes 10 ms apart, delay grows with distance.
  const std::size_t n = 10;
  auto nodes = make_nodes(n);
  DelayMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d(i, j) = 10.0 * static_cast<double>(i > j ? i - j : j - i);
  }
  CommunityParams p{.max_community_size = 10, .max_delay_ms = 25};
  auto raw = slpa_partition(nodes, d, p);
  for (const auto& c : raw) {
    for (auto a : c.members) {
      for (auto b : c.members) CHECK(d(a, b) <= 25.0);
    }
  }
  CHECK(validate_partition(resolve_overlaps(raw, d, p), d, p).empty());
}

TEST_CASE("resolve_overlaps: disjoint input is unchanged") {
  DelayMatrix d(4, 1.0);
  CommunityParams p{.max_community_size = 2, .max_delay_ms = 5};
  std::vector<Community> in{{{0, 1}}, {{2, 3}}};
  CHECK(resolve_overlaps(in, d, p) == in);
}

TEST_CASE("resolve_overlaps: shared node goes to the closer community") {
  // node 0 shared by A = {0,1,2} and B = {0,3,4}; mean delays 4 and 9 ms.
  DelayMatrix d(5, 1.0);
  d(0, 1) = d(1, 0) = 4.0;
  d(0, 2) = d(2, 0) = 4.0;
  d(0, 3) = d(3, 0) = 9.0;
  d(0, 4) = d(4, 0) = 9.0;
  CommunityParams p{.max_community_size = 5, .max_delay_ms = 20};
  auto out = resolve_overlaps({{{0, 1, 2}}, {{0, 3, 4}}}, d, p);
  REQUIRE(out.size() == 2);
  CHECK(out[0].members == std::vector<std::size_t>{0, 1, 2});
  CHECK(out[1].members == std::vector<std::size_t>{3, 4});
}

TEST_CASE("resolve_overlaps: equal mean delay ties to the earlier community") {
  DelayMatrix d(3, 2.0);
  CommunityParams p{.max_community_size = 3, .max_delay_ms = 20};
  auto out = resolve_overlaps({{{0, 1}}, {{0, 2}}}, d, p);
  REQUIRE(out.size() == 2);
  CHECK(out[0].members == std::vector<std::size_t>{0, 1});
  CHECK(out[1].members == std::vector<std::size_t>{2});
}

TEST_CASE("resolve_overlaps: node becomes a singleton when every target is full") {
  DelayMatrix d(5, 1.0);
  CommunityParams p{.max_community_size = 2, .max_delay_ms = 5};
  auto out = resolve_overlaps({{{0, 1, 2}}, {{0, 3, 4}}}, d, p);
  REQUIRE(out.size() == 3);
  CHECK(out[0].members == std::vector<std::size_t>{1, 2});
  CHECK(out[1].members == std::vector<std::size_t>{3, 4});
  CHECK(out[2].members == std::vector<std::size_t>{0});
}

TEST_CASE("validate_partition: examples") {
  DelayMatrix d(4, 3.0);
  CommunityParams p{.max_community_size = 2, .max_delay_ms = 10};
  CHECK(validate_partition({{{0, 1}}, {{2, 3}}}, d, p).empty());

  auto size = validate_partition({{{0, 1, 2}}, {{3}}}, d, p);
  REQUIRE(size.size() == 1);
  CHECK(size[0].kind == PartitionViolation::Kind::size);

  DelayMatrix far = d;
  far(2, 3) = 11.0;
  auto delay = validate_partition({{{0, 1}}, {{2, 3}}}, far, p);
  REQUIRE(delay.size() == 1);
  CHECK(delay[0].kind == PartitionViolation::Kind::delay);

  auto cover = validate_partition({{{0, 1}}, {{1, 2}}}, d, p);
  REQUIRE(cover.size() == 2);
  CHECK(cover[0].kind == PartitionViolation::Kind::overlap);
  CHECK(cover[1].kind == PartitionViolation::Kind::uncovered);
}

TEST_CASE("partition: random topologies are feasible and replayable") {
  std::mt19937_64 rng(11);
  for (int topo = 0; topo < 20; ++topo) {
    const std::size_t n = 2 + rng() % 30;
    const auto d = random_topology(rng, n);
    const auto nodes = make_nodes(n);
    CommunityParams p{.max_community_size = 1 + rng() % 6,
                      .max_delay_ms = 20.0 + static_cast<double>(rng() % 80)};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      p.rng_seed = seed;
      const auto a = partition(nodes, d, p);
      CHECK(validate_partition(a, d, p).empty());
      CHECK(partition(nodes, d, p) == a);
    }
  }
}

TEST_CASE("partition: wall time smoke check") {
  // Not asserted numerically; only exercised at two sizes.
  std::mt19937_64 rng(3);
  for (std::size_t n : {100U, 400U}) {
    const auto d = random_topology(rng, n);
    const auto nodes = make_nodes(n);
    CommunityParams p{.max_community_size = 8, .max_delay_ms = 30};
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = partition(nodes, d, p);
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("n=" << n << " communities=" << out.size() << " ms=" << ms);
    CHECK(validate_partition(out, d, p).empty());
  }
}

TEST_CASE("node and parameter validation") {
  NodeDescriptor n;
  n.id = "a";
  n.cpu_mc = 1000;
  n.cpu_memory_mb = 10;
  n.gpu_mc = 500;
  CHECK(validate_node(n).size() == 1);
  n.gpu_memory_mb = 100;
  CHECK(validate_node(n).empty());
  CHECK(validate_params(CommunityParams{.max_community_size = 0, .label_threshold = 0}).size() == 2);
  DelayMatrix d(2);
  d(0, 1) = -1;
  d(1, 1) = 2;
  CHECK(d.validate().size() == 2);
}

TEST_CASE("merge_communities joins feasible neighbours only") {
  const DelayMatrix d({{0, 4, 50, 9}, {4, 0, 50, 9}, {50, 50, 0, 50}, {9, 9, 50, 0}});
  CommunityParams p;
  p.max_community_size = 3;
  p.max_delay_ms = 10;
  const auto merged = merge_communities({{{0}}, {{1}}, {{2}}, {{3}}}, d, p);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].members == std::vector<std::size_t>{0, 1, 3});
  CHECK(merged[1].members == std::vector<std::size_t>{2});
  p.max_community_size = 2;
  const auto capped = merge_communities({{{0}}, {{1}}, {{2}}, {{3}}}, d, p);
  CHECK(capped.size() == 3);
  CHECK(validate_partition(capped, d, p).empty());
}
