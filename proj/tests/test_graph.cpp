#include <doctest.h>

#include <cmath>
#include <set>

#include "pulsar/errors.hpp"
#include "pulsar/hand_graph.hpp"

using namespace pulsar;

namespace {

std::set<std::pair<int, int>> undirected(const std::vector<std::pair<int, int>>& edges) {
  std::set<std::pair<int, int>> out;
  for (auto [a, b] : edges) out.insert(a < b ? std::pair{a, b} : std::pair{b, a});
  return out;
}

}  // namespace

TEST_SUITE("hand_graph") {
  TEST_CASE("21 vertices, 20 natural edges") {
    const HandGraph g = build_hand_graph();
    CHECK(HandGraph::vertex_count == 21);
    CHECK(g.natural_edges.size() == 20);
    CHECK(undirected(g.natural_edges).size() == 20);  // no duplicates
  }

  TEST_CASE("natural edges form a tree rooted at the wrist") {
    const HandGraph g = build_hand_graph();
    // parent chain reaches the wrist from every vertex
    for (int v = 0; v < HandGraph::vertex_count; ++v) {
      int cur = v, hops = 0;
      while (cur != HandGraph::wrist && hops <= 21) {
        cur = g.parent[static_cast<std::size_t>(cur)];
        ++hops;
      }
      CHECK(cur == HandGraph::wrist);
      CHECK(hops == g.hop_from_wrist[static_cast<std::size_t>(v)]);
    }
    CHECK(g.parent[HandGraph::wrist] == HandGraph::wrist);
    // every natural edge is a parent link
    for (auto [a, b] : g.natural_edges) {
      const bool parent_link = g.parent[static_cast<std::size_t>(b)] == a || g.parent[static_cast<std::size_t>(a)] == b;
      CHECK(parent_link);
    }
  }

  TEST_CASE("augmented edge families: 4 + 5 + 1") {
    const HandGraph g = build_hand_graph();
    CHECK(g.type1_edges.size() == 4);
    CHECK(g.type2_edges.size() == 5);
    CHECK(g.type3_edges.size() == 1);
    CHECK(g.augmented_edges().size() == 10);
    CHECK(undirected(g.type1_edges) == undirected({{4, 5}, {8, 9}, {12, 13}, {16, 17}}));
    CHECK(undirected(g.type2_edges) == undirected({{4, 2}, {8, 6}, {12, 10}, {16, 14}, {20, 18}}));
    CHECK(undirected(g.type3_edges) == undirected({{4, 8}}));
  }

  TEST_CASE("augmented edges are disjoint from natural edges and each other") {
    const HandGraph g = build_hand_graph();
    const auto nat = undirected(g.natural_edges);
    const auto t1 = undirected(g.type1_edges);
    const auto t2 = undirected(g.type2_edges);
    const auto t3 = undirected(g.type3_edges);
    for (const auto& e : t1) CHECK(!nat.count(e));
    for (const auto& e : t2) CHECK((!nat.count(e) && !t1.count(e)));
    for (const auto& e : t3) CHECK((!nat.count(e) && !t1.count(e) && !t2.count(e)));
  }

  TEST_CASE("parent examples") {
    const HandGraph g = build_hand_graph();
    CHECK(g.parent[8] == 7);
    CHECK(g.parent[5] == 0);
    CHECK(g.parent[0] == 0);
  }

  TEST_CASE("left and right hands share one topology") {
    const HandGraph right = build_hand_graph(Handedness::Right);
    const HandGraph left = build_hand_graph(Handedness::Left);
    CHECK(right.natural_edges == left.natural_edges);
    CHECK(right.type1_edges == left.type1_edges);
    CHECK(right.type2_edges == left.type2_edges);
    CHECK(right.type3_edges == left.type3_edges);
    CHECK(right.parent == left.parent);
  }
}

TEST_SUITE("partition") {
  TEST_CASE("self-loop subset is the identity") {
    const PartitionedAdjacency p = partition_adjacency(build_hand_graph());
    CHECK(p.subset_count == 3);
    for (int u = 0; u < 21; ++u)
      for (int v = 0; v < 21; ++v) CHECK(p.at(0, u, v) == (u == v ? 1.0 : 0.0));
  }

  TEST_CASE("row sums are 0 or 1 within 1e-12") {
    const PartitionedAdjacency p = partition_adjacency(build_hand_graph());
    for (int k = 0; k < 3; ++k)
      for (int u = 0; u < 21; ++u) {
        double sum = 0.0;
        for (int v = 0; v < 21; ++v) {
          CHECK(p.at(k, u, v) >= 0.0);
          sum += p.at(k, u, v);
        }
        const bool zero_or_one = std::fabs(sum) < 1e-12 || std::fabs(sum - 1.0) < 1e-12;
        CHECK(zero_or_one);
      }
  }

  TEST_CASE("hop-distance classification") {
    const PartitionedAdjacency p = partition_adjacency(build_hand_graph());
    // wrist -> index base is centrifugal, the reverse is centripetal
    CHECK(p.at(2, 0, 5) > 0.0);
    CHECK(p.at(1, 0, 5) == 0.0);
    CHECK(p.at(1, 5, 0) > 0.0);
    CHECK(p.at(2, 5, 0) == 0.0);
    // thumb tip and index tip are equidistant: both directions centrifugal
    CHECK(p.at(2, 4, 8) > 0.0);
    CHECK(p.at(2, 8, 4) > 0.0);
    CHECK(p.at(1, 4, 8) == 0.0);
    CHECK(p.at(1, 8, 4) == 0.0);
  }

  TEST_CASE("support union equals self-loops plus both directions of every edge") {
    const HandGraph g = build_hand_graph();
    const PartitionedAdjacency p = partition_adjacency(g);
    std::set<std::pair<int, int>> expected;
    for (int v = 0; v < 21; ++v) expected.insert({v, v});
    auto add_both = [&expected](const std::vector<std::pair<int, int>>& edges) {
      for (auto [a, b] : edges) {
        expected.insert({a, b});
        expected.insert({b, a});
      }
    };
    add_both(g.natural_edges);
    add_both(g.augmented_edges());

    std::set<std::pair<int, int>> support;
    int nonzeros = 0;
    for (int k = 0; k < 3; ++k)
      for (int u = 0; u < 21; ++u)
        for (int v = 0; v < 21; ++v)
          if (p.at(k, u, v) != 0.0) {
            support.insert({u, v});
            ++nonzeros;
          }
    CHECK(support == expected);
    // 21 self-loops + 2 * (20 natural + 10 augmented) directed entries
    CHECK(nonzeros == 81);
    CHECK(static_cast<int>(expected.size()) == 81);  // subsets do not overlap
  }

  TEST_CASE("construction is deterministic") {
    const PartitionedAdjacency a = partition_adjacency(build_hand_graph());
    const PartitionedAdjacency b = partition_adjacency(build_hand_graph());
    for (int k = 0; k < 3; ++k) CHECK(a.subsets[static_cast<std::size_t>(k)] == b.subsets[static_cast<std::size_t>(k)]);
  }

  TEST_CASE("unknown strategy tag is rejected") {
    CHECK_THROWS_AS(partition_strategy_from_string("banana"), ConfigError);
    CHECK(partition_strategy_from_string("spatial") == PartitionStrategy::SpatialConfiguration);
  }
}
