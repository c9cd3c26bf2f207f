#include "pulsar/streams.hpp"

#include "pulsar/errors.hpp"

namespace pulsar {

namespace {

std::size_t check_dims(std::span<const double> joints, int channels, int frames, int vertices) {
  const std::size_t expected = static_cast<std::size_t>(channels) * frames * vertices;
  if (joints.size() != expected)
    throw ShapeError("stream derivation: clip has " + std::to_string(joints.size()) + " values, expected " + std::to_string(expected));
  return expected;
}

}  // namespace

StreamKind stream_from_string(const std::string& s) {
  if (s == "joint") return StreamKind::Joint;
  if (s == "bone") return StreamKind::Bone;
  if (s == "velocity") return StreamKind::Velocity;
  if (s == "acceleration") return StreamKind::Acceleration;
  throw ConfigError("unknown stream '" + s + "' (expected joint|bone|velocity|acceleration)");
}

std::string to_string(StreamKind k) {
  switch (k) {
    case StreamKind::Joint: return "joint";
    case StreamKind::Bone: return "bone";
    case StreamKind::Velocity: return "velocity";
    case StreamKind::Acceleration: return "acceleration";
  }
  return "joint";
}

std::vector<double> derive_bone(std::span<const double> joints, int channels, int frames, int vertices, const HandGraph& graph) {
  check_dims(joints, channels, frames, vertices);
  if (vertices != HandGraph::vertex_count)
    throw ShapeError("derive_bone: clip has " + std::to_string(vertices) + " vertices, graph expects " + std::to_string(HandGraph::vertex_count));
  std::vector<double> out(joints.size());
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < frames; ++t) {
      const std::size_t base = (static_cast<std::size_t>(c) * frames + t) * vertices;
      for (int v = 0; v < vertices; ++v) out[base + v] = joints[base + v] - joints[base + graph.parent[v]];
    }
  return out;
}

std::vector<double> derive_velocity(std::span<const double> joints, int channels, int frames, int vertices) {
  check_dims(joints, channels, frames, vertices);
  if (frames < 2) throw ShapeError("derive_velocity: need at least 2 frames");
  std::vector<double> out(joints.size(), 0.0);
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t + 1 < frames; ++t) {
      const std::size_t row = (static_cast<std::size_t>(c) * frames + t) * vertices;
      const std::size_t next = row + static_cast<std::size_t>(vertices);
      for (int v = 0; v < vertices; ++v) out[row + v] = joints[next + v] - joints[row + v];
    }
  return out;
}

std::vector<double> derive_acceleration(std::span<const double> joints, int channels, int frames, int vertices) {
  check_dims(joints, channels, frames, vertices);
  if (frames < 3) throw ShapeError("derive_acceleration: need at least 3 frames");
  std::vector<double> out(joints.size(), 0.0);
  for (int c = 0; c < channels; ++c)
    for (int t = 1; t + 1 < frames; ++t) {
      const std::size_t row = (static_cast<std::size_t>(c) * frames + t) * vertices;
      const std::size_t prev = row - static_cast<std::size_t>(vertices);
      const std::size_t next = row + static_cast<std::size_t>(vertices);
      for (int v = 0; v < vertices; ++v) out[row + v] = joints[next + v] - 2.0 * joints[row + v] + joints[prev + v];
    }
  return out;
}

std::vector<double> derive_stream(StreamKind kind, std::span<const double> joints, int channels, int frames, int vertices, const HandGraph& graph) {
  switch (kind) {
    case StreamKind::Joint: return std::vector<double>(joints.begin(), joints.end());
    case StreamKind::Bone: return derive_bone(joints, channels, frames, vertices, graph);
    case StreamKind::Velocity: return derive_velocity(joints, channels, frames, vertices);
    case StreamKind::Acceleration: return derive_acceleration(joints, channels, frames, vertices);
  }
  throw ConfigError("unknown stream kind");
}

}  // namespace pulsar
