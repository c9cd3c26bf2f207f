#pragma once

#include <optional>
#include <span>
#include <vector>

namespace pulsar {

// Clip-level classification metrics; decision threshold is 0 on logit scores
// (ties break positive). AUROC is rank-based with half-credit for ties and is
// omitted when the labels are single-class.
struct MetricsReport {
  int n = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;
  std::optional<double> auroc;
};

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels);

// Mann-Whitney AUROC via midranks; throws DataError on single-class labels.
double auroc_rank(std::span<const double> scores, std::span<const int> labels);

// Elementwise arithmetic mean of per-stream logits.
std::vector<double> fuse_streams(const std::vector<std::vector<double>>& per_stream_logits);

}  // namespace pulsar
