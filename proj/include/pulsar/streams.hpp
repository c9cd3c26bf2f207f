#pragma once

#include <span>
#include <string>
#include <vector>

#include "pulsar/hand_graph.hpp"

namespace pulsar {

// The four feature streams; one model is trained per stream.
enum class StreamKind { Joint, Bone, Velocity, Acceleration };

StreamKind stream_from_string(const std::string& s);
std::string to_string(StreamKind k);

// All derivations map a C x T x V joint tensor to the same shape and are
// linear in the input. Boundary frames that lack a finite difference are
// zero-filled so T stays fixed.

// bone[.,t,v] = joint[.,t,v] - joint[.,t,parent(v)]; the wrist bone is zero.
std::vector<double> derive_bone(std::span<const double> joints, int channels, int frames, int vertices, const HandGraph& graph);

// v[.,t,.] = joint[.,t+1,.] - joint[.,t,.]; last frame zero.
std::vector<double> derive_velocity(std::span<const double> joints, int channels, int frames, int vertices);

// a[.,t,.] = joint[.,t+1,.] - 2 joint[.,t,.] + joint[.,t-1,.]; first and last frames zero.
std::vector<double> derive_acceleration(std::span<const double> joints, int channels, int frames, int vertices);

std::vector<double> derive_stream(StreamKind kind, std::span<const double> joints, int channels, int frames, int vertices, const HandGraph& graph);

}  // namespace pulsar
