#include "pulsar/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "pulsar/errors.hpp"

namespace pulsar {

double auroc_rank(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: score/label length mismatch");
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auroc: undefined for single-class labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // midranks over tied groups; rank sum of positives gives the U statistic
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("metrics: score/label length mismatch");
  if (scores.empty()) throw DataError("metrics: empty sample set");

  MetricsReport r;
  r.n = static_cast<int>(scores.size());
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= 0.0;
    const bool actual = labels[i] != 0;
    if (pred && actual) ++tp;
    else if (pred && !actual) ++fp;
    else if (!pred && !actual) ++tn;
    else ++fn;
  }
  const auto safe_div = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(r.n);
  r.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
  r.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));

  const double f1_pos = safe_div(2.0 * r.precision * r.recall, r.precision + r.recall);
  const double prec_neg = safe_div(static_cast<double>(tn), static_cast<double>(tn + fn));
  const double rec_neg = safe_div(static_cast<double>(tn), static_cast<double>(tn + fp));
  const double f1_neg = safe_div(2.0 * prec_neg * rec_neg, prec_neg + rec_neg);
  r.f1_macro = 0.5 * (f1_pos + f1_neg);
  const double support_pos = static_cast<double>(tp + fn);
  const double support_neg = static_cast<double>(tn + fp);
  r.f1_weighted = (support_pos * f1_pos + support_neg * f1_neg) / static_cast<double>(r.n);

  if (support_pos > 0 && support_neg > 0) r.auroc = auroc_rank(scores, labels);
  return r;
}

std::vector<double> fuse_streams(const std::vector<std::vector<double>>& per_stream_logits) {
  if (per_stream_logits.empty()) throw DataError("fuse: no streams given");
  const std::size_t n = per_stream_logits.front().size();
  for (const auto& s : per_stream_logits)
    if (s.size() != n) throw ShapeError("fuse: stream score lists have different lengths");
  std::vector<double> fused(n, 0.0);
  for (const auto& s : per_stream_logits)
    for (std::size_t i = 0; i < n; ++i) fused[i] += s[i];
  const double inv = 1.0 / static_cast<double>(per_stream_logits.size());
  for (double& v : fused) v *= inv;
  return fused;
}

}  // namespace pulsar
