#include "pulsar/bootstrap.hpp"

#include <cmath>
#include <map>

#include "pulsar/errors.hpp"
#include "pulsar/rng.hpp"

namespace pulsar {

namespace {

// component-wise moments across replicates; AUROC only over replicates where
// it is defined
void accumulate_moments(const std::vector<MetricsReport>& reps, MetricsReport& mean, MetricsReport& stddev) {
  const auto moments = [&](auto getter, double& m_out, double& s_out) {
    double m = 0.0, count = 0.0;
    for (const auto& r : reps) {
      const auto v = getter(r);
      if (!v) continue;
      m += *v;
      count += 1.0;
    }
    if (count == 0.0) {
      m_out = 0.0;
      s_out = 0.0;
      return;
    }
    m /= count;
    double ss = 0.0;
    for (const auto& r : reps) {
      const auto v = getter(r);
      if (!v) continue;
      ss += (*v - m) * (*v - m);
    }
    m_out = m;
    s_out = std::sqrt(ss / count);
  };

  moments([](const MetricsReport& r) { return std::optional<double>(r.accuracy); }, mean.accuracy, stddev.accuracy);
  moments([](const MetricsReport& r) { return std::optional<double>(r.precision); }, mean.precision, stddev.precision);
  moments([](const MetricsReport& r) { return std::optional<double>(r.recall); }, mean.recall, stddev.recall);
  moments([](const MetricsReport& r) { return std::optional<double>(r.f1_macro); }, mean.f1_macro, stddev.f1_macro);
  moments([](const MetricsReport& r) { return std::optional<double>(r.f1_weighted); }, mean.f1_weighted, stddev.f1_weighted);
  double auroc_mean = 0.0, auroc_sd = 0.0;
  moments([](const MetricsReport& r) { return r.auroc; }, auroc_mean, auroc_sd);
  bool any_auroc = false;
  for (const auto& r : reps) any_auroc = any_auroc || r.auroc.has_value();
  if (any_auroc) {
    mean.auroc = auroc_mean;
    stddev.auroc = auroc_sd;
  }
}

}  // namespace

BootstrapReport bootstrap_eval(const std::vector<ScoredClip>& clips, int n_participants, int replicates,
                               std::uint64_t seed) {
  if (clips.empty()) throw DataError("bootstrap: empty test set");
  if (n_participants < 1 || replicates < 1) throw ConfigError("bootstrap: participants and replicates must be >= 1");

  std::map<std::string, std::vector<const ScoredClip*>> by_participant;
  for (const auto& c : clips) by_participant[c.participant_id].push_back(&c);
  std::vector<const std::vector<const ScoredClip*>*> groups;
  groups.reserve(by_participant.size());
  for (const auto& [id, group] : by_participant) groups.push_back(&group);

  BootstrapReport report;
  report.n_participants = n_participants;
  report.replicates = replicates;
  for (int rep = 0; rep < replicates; ++rep) {
    Rng rng(derive_seed(seed, 0xb005 + static_cast<std::uint64_t>(rep)));
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n_participants; ++i) {
      const auto& group = *groups[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(groups.size())))];
      for (const ScoredClip* c : group) {
        scores.push_back(c->score);
        labels.push_back(c->label);
      }
    }
    report.replicate_metrics.push_back(compute_metrics(scores, labels));
  }
  accumulate_moments(report.replicate_metrics, report.mean, report.stddev);
  report.mean.n = report.replicate_metrics.front().n;
  report.stddev.n = 0;
  return report;
}

}  // namespace pulsar
