#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "pulsar/adam.hpp"
#include "pulsar/checkpoint.hpp"
#include "pulsar/data.hpp"
#include "pulsar/errors.hpp"
#include "pulsar/network.hpp"
#include "pulsar/pu_risk.hpp"
#include "pulsar/streams.hpp"

namespace pulsar {

struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-4;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  int max_epochs = 30;
  RiskConfig risk;
  StreamKind stream = StreamKind::Joint;
  std::uint64_t seed = 0;
  std::string precision = "f64";  // f32 | f64

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (plateau_patience < 1) throw ConfigError("train: plateau patience must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("train: plateau factor must lie in (0,1)");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (precision != "f32" && precision != "f64") throw ConfigError("train: precision must be f32 or f64");
    risk.validate();
  }
};

// Reduce-on-plateau over validation accuracy: `patience` consecutive epochs
// without improvement halve (by `factor`) the rate and reset the counter.
struct PlateauState {
  double lr = 1e-4;
  double factor = 0.5;
  int patience = 5;
  double best = -1.0;
  int stale = 0;
};

inline double plateau_step(PlateauState& state, double val_accuracy) {
  if (val_accuracy < 0.0 || val_accuracy > 1.0) throw ConfigError("plateau: accuracy must lie in [0,1]");
  if (val_accuracy > state.best) {
    state.best = val_accuracy;
    state.stale = 0;
  } else if (++state.stale >= state.patience) {
    state.lr *= state.factor;
    state.stale = 0;
  }
  return state.lr;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

namespace detail {

template <class S>
TensorT<S> assemble_batch(const std::vector<Clip>& clips, const std::vector<int>& idx, std::size_t begin, std::size_t end) {
  const Clip& first = clips[static_cast<std::size_t>(idx[begin])];
  const int n = static_cast<int>(end - begin);
  TensorT<S> batch(Shape{n, Clip::channels, first.frames, first.vertices});
  const std::size_t per = static_cast<std::size_t>(Clip::channels) * first.frames * first.vertices;
  for (std::size_t i = begin; i < end; ++i) {
    const Clip& clip = clips[static_cast<std::size_t>(idx[i])];
    if (clip.data.size() != per) throw ShapeError("train: inconsistent clip sizes in batch");
    S* dst = batch.data() + (i - begin) * per;
    for (std::size_t j = 0; j < per; ++j) dst[j] = static_cast<S>(clip.data[j]);
  }
  return batch;
}

// Eval-mode logits for a clip list, chunked to bound memory.
template <class S>
std::vector<double> forward_scores(NetworkParamsT<S>& params, const std::vector<TensorT<S>>& adjacency,
                                   const std::vector<Clip>& clips, int batch_size) {
  std::vector<double> scores;
  scores.reserve(clips.size());
  std::vector<int> idx(clips.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  for (std::size_t begin = 0; begin < clips.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(clips.size(), begin + static_cast<std::size_t>(batch_size));
    TapeT<S> tape(0, /*grad_enabled=*/false);
    TensorT<S> batch = assemble_batch<S>(clips, idx, begin, end);
    TensorT<S> logits = network_forward(tape, batch, params, adjacency, /*train=*/false);
    for (std::size_t i = 0; i < end - begin; ++i) scores.push_back(static_cast<double>(logits.data()[i]));
  }
  return scores;
}

}  // namespace detail

// decision by sign; zero breaks toward positive
inline bool positive_decision(double logit) { return logit >= 0.0; }

template <class S>
Checkpoint train_stream(const ModelConfig& model_cfg, const std::vector<Clip>& train_clips,
                        const std::vector<Clip>& val_clips, const TrainConfig& cfg,
                        const PartitionedAdjacency& adjacency, std::ostream* log = nullptr) {
  cfg.validate();
  model_cfg.validate();
  if (train_clips.empty()) throw DataError("train: empty training set");
  if (val_clips.empty()) throw DataError("train: empty validation set");

  std::size_t n_pos = 0;
  for (const auto& c : train_clips) n_pos += c.label == Label::Positive ? 1 : 0;
  const std::size_t n_other = train_clips.size() - n_pos;
  if (n_pos == 0) throw DataError("train: no positive-labeled clips; cannot fit either estimator");
  if (n_other == 0)
    throw DataError(cfg.risk.mode == RiskMode::PN ? "train: PN mode needs negative-labeled (unlabeled) clips"
                                                  : "train: PU mode needs unlabeled clips");

  const std::vector<TensorT<S>> adj = adjacency_tensors<S>(adjacency);
  NetworkParamsT<S> params = init_params<S>(model_cfg, derive_seed(cfg.seed, 1));
  auto named = params.named_params();

  AdamStateT<S> adam;
  adam.lr = cfg.lr;
  PlateauState plateau{cfg.lr, cfg.plateau_factor, cfg.plateau_patience, -1.0, 0};

  std::vector<int> order(train_clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<EpochRecord> history;
  double best_acc = -1.0;
  int best_epoch = -1;
  std::vector<std::vector<double>> best_params;
  std::vector<std::vector<S>> best_stats;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr_this_epoch = plateau.lr;
    adam.lr = lr_this_epoch;
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    RiskBreakdown epoch_risk;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      TapeT<S> tape(derive_seed(cfg.seed, 0xd0 + static_cast<std::uint64_t>(epoch) * 1000003 + begin));
      TensorT<S> batch = detail::assemble_batch<S>(train_clips, order, begin, end);
      TensorT<S> logits = network_forward(tape, batch, params, adj, /*train=*/true);

      std::vector<double> scores_p, scores_o;
      std::vector<std::size_t> idx_p, idx_o;
      for (std::size_t i = begin; i < end; ++i) {
        const double s = static_cast<double>(logits.data()[i - begin]);
        if (train_clips[static_cast<std::size_t>(order[i])].label == Label::Positive) {
          scores_p.push_back(s);
          idx_p.push_back(i - begin);
        } else {
          scores_o.push_back(s);
          idx_o.push_back(i - begin);
        }
      }

      // a batch may come up single-sided by chance; the present term still trains
      RiskBreakdown risk;
      std::vector<double> grad_p(scores_p.size(), 0.0), grad_o(scores_o.size(), 0.0);
      if (scores_p.empty() || scores_o.empty()) {
        const bool pos = scores_o.empty();
        auto& scores = pos ? scores_p : scores_o;
        auto& grads = pos ? grad_p : grad_o;
        const double w = (pos ? cfg.risk.theta_p : 1.0) / static_cast<double>(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
          risk.total += w * base_loss(pos ? scores[i] : -scores[i], cfg.risk.base_loss);
          grads[i] = (pos ? 1.0 : -1.0) * w * base_loss_derivative(pos ? scores[i] : -scores[i], cfg.risk.base_loss);
        }
        (pos ? risk.positive_term : risk.unlabeled_or_negative_term) = risk.total;
      } else if (cfg.risk.mode == RiskMode::PN) {
        risk = risk_pn_grad(scores_p, scores_o, cfg.risk, grad_p, grad_o);
      } else {
        risk = risk_pu_grad(scores_p, scores_o, cfg.risk, grad_p, grad_o);
      }

      std::vector<S> seed(logits.size(), S(0));
      for (std::size_t i = 0; i < idx_p.size(); ++i) seed[idx_p[i]] = static_cast<S>(grad_p[i]);
      for (std::size_t i = 0; i < idx_o.size(); ++i) seed[idx_o[i]] = static_cast<S>(grad_o[i]);
      tape.backward_seeded(logits, seed);

      std::vector<TensorT<S>> plist;
      std::vector<std::vector<S>> glist;
      plist.reserve(named.size());
      glist.reserve(named.size());
      for (auto& [name, tensor] : named) {
        plist.push_back(*tensor);
        glist.push_back(tape.grad(*tensor));
      }
      adam_step(plist, glist, adam);

      epoch_risk.total += risk.total;
      epoch_risk.positive_term += risk.positive_term;
      epoch_risk.unlabeled_or_negative_term += risk.unlabeled_or_negative_term;
      epoch_risk.clamped = epoch_risk.clamped || risk.clamped;
      ++batches;
    }
    epoch_risk.total /= batches;
    epoch_risk.positive_term /= batches;
    epoch_risk.unlabeled_or_negative_term /= batches;

    const std::vector<double> val_scores = detail::forward_scores(params, adj, val_clips, cfg.batch_size);
    int correct = 0;
    for (std::size_t i = 0; i < val_clips.size(); ++i) {
      const bool predicted = positive_decision(val_scores[i]);
      const bool actual = val_clips[i].label == Label::Positive;
      correct += predicted == actual ? 1 : 0;
    }
    const double val_acc = static_cast<double>(correct) / static_cast<double>(val_clips.size());

    history.push_back(EpochRecord{epoch, batches, epoch_risk, val_acc, lr_this_epoch});
    if (log) {
      nlohmann::json line{{"epoch", epoch},
                          {"steps", batches},
                          {"train_risk", risk_breakdown_to_json(epoch_risk)},
                          {"val_accuracy", val_acc},
                          {"lr", lr_this_epoch}};
      (*log) << line.dump() << "\n";
    }

    if (val_acc > best_acc) {
      best_acc = val_acc;
      best_epoch = epoch;
      best_params.clear();
      for (auto& [name, tensor] : named)
        best_params.emplace_back(tensor->vec().begin(), tensor->vec().end());
      best_stats.clear();
      for (auto& [name, stat] : params.named_stats()) best_stats.push_back(*stat);
    }
    plateau_step(plateau, val_acc);
  }

  Checkpoint ckpt;
  ckpt.dtype = cfg.precision;
  ckpt.model_config = model_config_to_json(model_cfg);
  ckpt.train_config = train_config_to_json(cfg);
  ckpt.stream = to_string(cfg.stream);
  ckpt.best_epoch = best_epoch;
  ckpt.best_val_accuracy = best_acc;
  ckpt.history = std::move(history);
  std::size_t pi = 0;
  for (auto& [name, tensor] : named) {
    CheckpointEntry e;
    e.name = name;
    e.shape = tensor->shape();
    e.values = std::move(best_params[pi++]);
    ckpt.entries.push_back(std::move(e));
  }
  std::size_t si = 0;
  for (auto& [name, stat] : params.named_stats()) {
    CheckpointEntry e;
    e.name = name;
    e.shape = Shape{static_cast<int>(stat->size())};
    e.values.assign(best_stats[si].begin(), best_stats[si].end());
    ++si;
    e.is_stat = true;
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

// Rebuild network parameters from a checkpoint; shapes re-validate against the
// embedded model config.
template <class S>
NetworkParamsT<S> network_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = model_config_from_json(ckpt.model_config);
  NetworkParamsT<S> params = init_params<S>(cfg, 0);
  for (auto& [name, tensor] : params.named_params()) {
    const CheckpointEntry& e = ckpt.entry(name);
    if (e.shape != tensor->shape())
      throw DataError("checkpoint: entry '" + name + "' has shape " + shape_str(e.shape) + ", expected " + shape_str(tensor->shape()));
    for (std::size_t i = 0; i < e.values.size(); ++i) tensor->data()[i] = static_cast<S>(e.values[i]);
  }
  for (auto& [name, stat] : params.named_stats()) {
    const CheckpointEntry& e = ckpt.entry(name);
    if (e.values.size() != stat->size())
      throw DataError("checkpoint: stat '" + name + "' has length " + std::to_string(e.values.size()));
    for (std::size_t i = 0; i < e.values.size(); ++i) (*stat)[i] = static_cast<S>(e.values[i]);
  }
  return params;
}

}  // namespace pulsar
