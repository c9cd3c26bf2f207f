#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace pulsar {

enum class Handedness { Right, Left };

Handedness handedness_from_string(const std::string& s);
std::string to_string(Handedness h);

// 21-vertex hand skeleton. Vertex 0 is the wrist; fingers occupy consecutive
// index blocks (thumb 1-4, index 5-8, middle 9-12, ring 13-16, pinky 17-20)
// with each block ending at the fingertip. Augmented edges add fingertip
// context on top of the 20-edge anatomical tree:
//   type1 fingertip -> base of the adjacent finger (pinky tip has none)
//   type2 fingertip -> middle joint of the same finger
//   type3 thumb tip -> index fingertip (the tapping pair)
struct HandGraph {
  static constexpr int vertex_count = 21;
  static constexpr int wrist = 0;

  std::vector<std::pair<int, int>> natural_edges;
  std::vector<std::pair<int, int>> type1_edges;
  std::vector<std::pair<int, int>> type2_edges;
  std::vector<std::pair<int, int>> type3_edges;
  std::array<int, vertex_count> parent{};          // toward the wrist; wrist maps to itself
  std::array<int, vertex_count> hop_from_wrist{};  // over natural edges

  std::vector<std::pair<int, int>> augmented_edges() const;
};

// Both hands share one topology; left-hand mirroring happens in coordinate
// space, not graph space.
HandGraph build_hand_graph(Handedness handedness = Handedness::Right);

enum class PartitionStrategy { SpatialConfiguration };

PartitionStrategy partition_strategy_from_string(const std::string& s);
std::string to_string(PartitionStrategy s);

// K_v row-normalized adjacency subsets. Entry (u, v) of subset k is nonzero
// when the directed edge u->v belongs to the subset; rows sum to 0 or 1.
struct PartitionedAdjacency {
  int subset_count = 0;
  int vertices = 0;
  PartitionStrategy strategy = PartitionStrategy::SpatialConfiguration;
  std::vector<std::vector<double>> subsets;  // each vertices*vertices, row-major

  double at(int k, int u, int v) const { return subsets[static_cast<std::size_t>(k)][static_cast<std::size_t>(u) * vertices + v]; }
};

// Spatial-configuration partitioning: subset 0 self-loops, subset 1 edges to
// neighbors strictly closer to the wrist (centripetal), subset 2 edges to
// farther or equidistant neighbors (centrifugal). Augmented edges follow the
// same hop-distance rule.
PartitionedAdjacency partition_adjacency(const HandGraph& graph,
                                         PartitionStrategy strategy = PartitionStrategy::SpatialConfiguration);

}  // namespace pulsar
