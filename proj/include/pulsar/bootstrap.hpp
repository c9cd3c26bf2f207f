#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pulsar/metrics.hpp"

namespace pulsar {

// A clip scored once by a model; bootstrap replicates resample participants
// and reuse the scores.
struct ScoredClip {
  std::string participant_id;
  double score = 0.0;
  int label = 0;  // 1 positive, 0 negative
};

struct BootstrapReport {
  int n_participants = 0;
  int replicates = 0;
  std::vector<MetricsReport> replicate_metrics;
  MetricsReport mean;
  MetricsReport stddev;
};

// Samples `n_participants` with replacement per replicate (duplicates keep
// their multiplicity) and computes clip-level metrics on each draw.
BootstrapReport bootstrap_eval(const std::vector<ScoredClip>& clips, int n_participants, int replicates,
                               std::uint64_t seed);

}  // namespace pulsar
