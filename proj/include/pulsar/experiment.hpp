#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulsar/bootstrap.hpp"
#include "pulsar/checkpoint.hpp"
#include "pulsar/data.hpp"
#include "pulsar/metrics.hpp"
#include "pulsar/training.hpp"

namespace pulsar {

// Ablation family: joint-stream baseline, plus PU learning, adaptive
// convolution, their combination, and the full four-stream model.
enum class Variant { JS, JS_PU, JS_AC, JS_AC_PU, PULSAR };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct VariantSpec {
  bool adaptive = false;
  bool pu = false;
  std::vector<StreamKind> streams;
};

VariantSpec variant_spec(Variant v);

struct ExperimentPlan {
  Variant variant = Variant::PULSAR;
  ModelConfig model;  // adaptive flag is overridden by the variant
  TrainConfig train;  // stream/risk mode are overridden by the variant
  double val_fraction = 0.2;
  bool augment = true;
};

struct PreparedClips {
  std::vector<Clip> train;  // joint-stream data, flip-augmented
  std::vector<Clip> val;    // joint-stream data, no augmentation
  nlohmann::json report;            // cleaning / segmentation summary
};

// Clean, split by participant, window into clips, and augment the training
// side fourfold. Stream features are derived later, per model.
PreparedClips prepare_training_clips(const std::vector<KeypointSequence>& data, double val_fraction,
                                     std::uint64_t seed, bool augment);

// Clean and window a held-out set; no augmentation.
std::vector<Clip> prepare_eval_clips(const std::vector<KeypointSequence>& data, nlohmann::json* report = nullptr);

std::vector<Clip> derive_stream_clips(const std::vector<Clip>& joint_clips, StreamKind kind, const HandGraph& graph);

struct TrainedVariant {
  Variant variant = Variant::JS;
  std::vector<Checkpoint> checkpoints;  // one per stream, in variant stream order
};

// Trains every stream model of the variant (optionally in parallel) and, when
// out_dir is non-empty, writes <VARIANT>_<stream>.ckpt plus a JSON-lines
// training log per stream.
TrainedVariant train_variant(const std::vector<KeypointSequence>& dataset, const ExperimentPlan& plan,
                             int threads = 1, const std::string& out_dir = "", std::ostream* console = nullptr);

// Eval-mode logits of one checkpointed stream model over joint-data clips.
std::vector<double> score_clips(const Checkpoint& ckpt, const std::vector<Clip>& joint_clips, const HandGraph& graph);

struct VariantEvaluation {
  std::vector<std::string> stream_names;
  std::vector<MetricsReport> per_stream;
  MetricsReport fused;
  std::vector<ScoredClip> scored;  // fused logits with evaluation labels
  bool used_true_labels = false;
};

VariantEvaluation evaluate_variant(const std::vector<Checkpoint>& checkpoints, const std::vector<Clip>& joint_clips);

nlohmann::json metrics_to_json(const MetricsReport& m);
nlohmann::json evaluation_to_json(const VariantEvaluation& eval);
std::string metrics_csv(const VariantEvaluation& eval);
nlohmann::json bootstrap_to_json(const BootstrapReport& report);

}  // namespace pulsar
