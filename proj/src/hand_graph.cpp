#include "pulsar/hand_graph.hpp"

#include "pulsar/errors.hpp"

namespace pulsar {

Handedness handedness_from_string(const std::string& s) {
  if (s == "right") return Handedness::Right;
  if (s == "left") return Handedness::Left;
  throw ConfigError("unknown handedness '" + s + "' (expected right|left)");
}

std::string to_string(Handedness h) { return h == Handedness::Right ? "right" : "left"; }

PartitionStrategy partition_strategy_from_string(const std::string& s) {
  if (s == "spatial") return PartitionStrategy::SpatialConfiguration;
  throw ConfigError("unknown partition strategy '" + s + "' (expected spatial)");
}

std::string to_string(PartitionStrategy) { return "spatial"; }

std::vector<std::pair<int, int>> HandGraph::augmented_edges() const {
  std::vector<std::pair<int, int>> all = type1_edges;
  all.insert(all.end(), type2_edges.begin(), type2_edges.end());
  all.insert(all.end(), type3_edges.begin(), type3_edges.end());
  return all;
}

HandGraph build_hand_graph(Handedness) {
  HandGraph g;
  for (int base : {1, 5, 9, 13, 17}) {
    g.natural_edges.emplace_back(HandGraph::wrist, base);
    for (int j = 0; j < 3; ++j) g.natural_edges.emplace_back(base + j, base + j + 1);
  }
  g.type1_edges = {{4, 5}, {8, 9}, {12, 13}, {16, 17}};
  g.type2_edges = {{4, 2}, {8, 6}, {12, 10}, {16, 14}, {20, 18}};
  g.type3_edges = {{4, 8}};

  g.parent[HandGraph::wrist] = HandGraph::wrist;
  g.hop_from_wrist[HandGraph::wrist] = 0;
  for (int base : {1, 5, 9, 13, 17})
    for (int j = 0; j < 4; ++j) {
      const int vtx = base + j;
      g.parent[vtx] = j == 0 ? HandGraph::wrist : vtx - 1;
      g.hop_from_wrist[vtx] = j + 1;
    }
  return g;
}

PartitionedAdjacency partition_adjacency(const HandGraph& graph, PartitionStrategy strategy) {
  constexpr int v = HandGraph::vertex_count;
  PartitionedAdjacency part;
  part.subset_count = 3;
  part.vertices = v;
  part.strategy = strategy;
  part.subsets.assign(3, std::vector<double>(static_cast<std::size_t>(v) * v, 0.0));

  auto& self_loops = part.subsets[0];
  auto& centripetal = part.subsets[1];
  auto& centrifugal = part.subsets[2];

  for (int i = 0; i < v; ++i) self_loops[static_cast<std::size_t>(i) * v + i] = 1.0;

  auto classify = [&](int from, int to) -> std::vector<double>& {
    return graph.hop_from_wrist[to] < graph.hop_from_wrist[from] ? centripetal : centrifugal;
  };
  auto add_edge = [&](int a, int b) {
    classify(a, b)[static_cast<std::size_t>(a) * v + b] = 1.0;
    classify(b, a)[static_cast<std::size_t>(b) * v + a] = 1.0;
  };
  for (const auto& [a, b] : graph.natural_edges) add_edge(a, b);
  for (const auto& [a, b] : graph.augmented_edges()) add_edge(a, b);

  // row-normalize each subset (zero-degree rows stay zero)
  for (auto& mat : part.subsets)
    for (int row = 0; row < v; ++row) {
      double degree = 0.0;
      for (int col = 0; col < v; ++col) degree += mat[static_cast<std::size_t>(row) * v + col];
      if (degree > 0.0)
        for (int col = 0; col < v; ++col) mat[static_cast<std::size_t>(row) * v + col] /= degree;
    }
  return part;
}

}  // namespace pulsar
