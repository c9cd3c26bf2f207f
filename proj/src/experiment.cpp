#include "pulsar/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "pulsar/errors.hpp"
#include "pulsar/rng.hpp"
#include "pulsar/streams.hpp"

namespace pulsar {

using nlohmann::json;

Variant variant_from_string(const std::string& s) {
  if (s == "JS") return Variant::JS;
  if (s == "JS_PU") return Variant::JS_PU;
  if (s == "JS_AC") return Variant::JS_AC;
  if (s == "JS_AC_PU") return Variant::JS_AC_PU;
  if (s == "PULSAR") return Variant::PULSAR;
  throw ConfigError("unknown variant '" + s + "' (expected JS|JS_PU|JS_AC|JS_AC_PU|PULSAR)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::JS: return "JS";
    case Variant::JS_PU: return "JS_PU";
    case Variant::JS_AC: return "JS_AC";
    case Variant::JS_AC_PU: return "JS_AC_PU";
    case Variant::PULSAR: return "PULSAR";
  }
  return "JS";
}

VariantSpec variant_spec(Variant v) {
  switch (v) {
    case Variant::JS: return {false, false, {StreamKind::Joint}};
    case Variant::JS_PU: return {false, true, {StreamKind::Joint}};
    case Variant::JS_AC: return {true, false, {StreamKind::Joint}};
    case Variant::JS_AC_PU: return {true, true, {StreamKind::Joint}};
    case Variant::PULSAR:
      return {true, true, {StreamKind::Joint, StreamKind::Bone, StreamKind::Velocity, StreamKind::Acceleration}};
  }
  return {};
}

PreparedClips prepare_training_clips(const std::vector<KeypointSequence>& data, double val_fraction,
                                     std::uint64_t seed, bool augment) {
  PreparedClips out;
  int dropped_frames = 0, skipped_sequences = 0;
  std::vector<KeypointSequence> cleaned;
  cleaned.reserve(data.size());
  for (const auto& seq : data) {
    CleanStats stats;
    KeypointSequence c = clean_sequence(seq, &stats);
    dropped_frames += stats.frames_dropped;
    if (stats.emptied) {
      ++skipped_sequences;
      continue;
    }
    cleaned.push_back(std::move(c));
  }

  auto [train_seqs, val_seqs] = split_by_participant(cleaned, val_fraction, seed);
  int short_sequences = 0;
  for (const auto& seq : train_seqs) {
    const std::vector<Clip> clips = segment_clips(seq);
    if (clips.empty()) ++short_sequences;
    for (const auto& clip : clips) {
      if (augment) {
        for (auto& variant : augment_clip(clip)) out.train.push_back(std::move(variant));
      } else {
        out.train.push_back(clip);
      }
    }
  }
  for (const auto& seq : val_seqs) {
    const std::vector<Clip> clips = segment_clips(seq);
    if (clips.empty()) ++short_sequences;
    out.val.insert(out.val.end(), clips.begin(), clips.end());
  }

  out.report = json{{"sequences_in", data.size()},
                    {"sequences_skipped_empty", skipped_sequences},
                    {"sequences_below_window", short_sequences},
                    {"frames_dropped", dropped_frames},
                    {"train_clips", out.train.size()},
                    {"val_clips", out.val.size()},
                    {"train_participants", train_seqs.size()},
                    {"val_participants", val_seqs.size()}};
  return out;
}

std::vector<Clip> prepare_eval_clips(const std::vector<KeypointSequence>& data, json* report) {
  std::vector<Clip> out;
  int dropped_frames = 0, skipped = 0;
  for (const auto& seq : data) {
    CleanStats stats;
    KeypointSequence c = clean_sequence(seq, &stats);
    dropped_frames += stats.frames_dropped;
    if (stats.emptied) {
      ++skipped;
      continue;
    }
    const std::vector<Clip> clips = segment_clips(c);
    out.insert(out.end(), clips.begin(), clips.end());
  }
  if (report)
    *report = json{{"sequences_in", data.size()},
                   {"sequences_skipped_empty", skipped},
                   {"frames_dropped", dropped_frames},
                   {"clips", out.size()}};
  return out;
}

std::vector<Clip> derive_stream_clips(const std::vector<Clip>& joint_clips, StreamKind kind, const HandGraph& graph) {
  if (kind == StreamKind::Joint) return joint_clips;
  std::vector<Clip> out = joint_clips;
  for (auto& clip : out) clip.data = derive_stream(kind, clip.data, Clip::channels, clip.frames, clip.vertices, graph);
  return out;
}

namespace {

TrainConfig stream_train_config(const ExperimentPlan& plan, const VariantSpec& spec, StreamKind stream, std::size_t stream_index) {
  TrainConfig cfg = plan.train;
  cfg.stream = stream;
  if (spec.pu) {
    if (cfg.risk.mode == RiskMode::PN) cfg.risk.mode = RiskMode::PUNonNegative;
  } else {
    cfg.risk.mode = RiskMode::PN;
  }
  cfg.seed = derive_seed(plan.train.seed, 0x57e0 + stream_index);
  return cfg;
}

Checkpoint train_one_stream(const ModelConfig& model_cfg, const PreparedClips& prepared, const TrainConfig& cfg,
                            const PartitionedAdjacency& adjacency, const HandGraph& graph, const std::string& out_dir,
                            const std::string& tag) {
  const std::vector<Clip> train_clips = derive_stream_clips(prepared.train, cfg.stream, graph);
  const std::vector<Clip> val_clips = derive_stream_clips(prepared.val, cfg.stream, graph);

  std::ostringstream log;
  Checkpoint ckpt = cfg.precision == "f32" ? train_stream<float>(model_cfg, train_clips, val_clips, cfg, adjacency, &log)
                                           : train_stream<double>(model_cfg, train_clips, val_clips, cfg, adjacency, &log);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(ckpt, out_dir + "/" + tag + ".ckpt");
    std::ofstream log_file(out_dir + "/" + tag + ".log.jsonl", std::ios::binary);
    log_file << log.str();
  }
  return ckpt;
}

}  // namespace

TrainedVariant train_variant(const std::vector<KeypointSequence>& dataset, const ExperimentPlan& plan,
                             int threads, const std::string& out_dir, std::ostream* console) {
  const VariantSpec spec = variant_spec(plan.variant);
  ModelConfig model_cfg = plan.model;
  model_cfg.adaptive = spec.adaptive;
  model_cfg.validate();
  plan.train.validate();

  const HandGraph graph = build_hand_graph();
  const PartitionedAdjacency adjacency = partition_adjacency(graph);
  const PreparedClips prepared = prepare_training_clips(dataset, plan.val_fraction, plan.train.seed, plan.augment);
  if (console) (*console) << "prepared clips: " << prepared.report.dump() << "\n";

  TrainedVariant result;
  result.variant = plan.variant;
  result.checkpoints.resize(spec.streams.size());

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(spec.streams.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < spec.streams.size(); ++i) {
      const TrainConfig cfg = stream_train_config(plan, spec, spec.streams[i], i);
      const std::string tag = to_string(plan.variant) + "_" + to_string(spec.streams[i]);
      result.checkpoints[i] = train_one_stream(model_cfg, prepared, cfg, adjacency, graph, out_dir, tag);
      if (console) (*console) << "trained " << tag << " best_val_acc=" << result.checkpoints[i].best_val_accuracy << "\n";
    }
  } else {
    // stream models are independent; run them on a small worker pool
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(spec.streams.size());
    std::size_t next = 0;
    std::mutex mu;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= spec.streams.size()) return;
            i = next++;
          }
          try {
            const TrainConfig cfg = stream_train_config(plan, spec, spec.streams[i], i);
            const std::string tag = to_string(plan.variant) + "_" + to_string(spec.streams[i]);
            result.checkpoints[i] = train_one_stream(model_cfg, prepared, cfg, adjacency, graph, out_dir, tag);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    if (console)
      for (std::size_t i = 0; i < spec.streams.size(); ++i)
        (*console) << "trained " << to_string(plan.variant) << "_" << to_string(spec.streams[i])
                   << " best_val_acc=" << result.checkpoints[i].best_val_accuracy << "\n";
  }
  return result;
}

namespace {

template <class S>
std::vector<double> score_clips_typed(const Checkpoint& ckpt, const std::vector<Clip>& clips,
                                      const PartitionedAdjacency& adjacency) {
  NetworkParamsT<S> params = network_from_checkpoint<S>(ckpt);
  const std::vector<TensorT<S>> adj = adjacency_tensors<S>(adjacency);
  const TrainConfig cfg = train_config_from_json(ckpt.train_config);
  return detail::forward_scores(params, adj, clips, cfg.batch_size);
}

}  // namespace

std::vector<double> score_clips(const Checkpoint& ckpt, const std::vector<Clip>& joint_clips, const HandGraph& graph) {
  const std::vector<Clip> clips = derive_stream_clips(joint_clips, stream_from_string(ckpt.stream), graph);
  const PartitionedAdjacency adjacency = partition_adjacency(graph);
  return ckpt.dtype == "f32" ? score_clips_typed<float>(ckpt, clips, adjacency)
                             : score_clips_typed<double>(ckpt, clips, adjacency);
}

VariantEvaluation evaluate_variant(const std::vector<Checkpoint>& checkpoints, const std::vector<Clip>& joint_clips) {
  if (checkpoints.empty()) throw ConfigError("evaluate: no checkpoints given");
  if (joint_clips.empty()) throw DataError("evaluate: no clips in the evaluation set");
  const HandGraph graph = build_hand_graph();

  VariantEvaluation eval;
  std::vector<int> labels;
  labels.reserve(joint_clips.size());
  for (const auto& clip : joint_clips) {
    labels.push_back(clip.eval_positive() ? 1 : 0);
    eval.used_true_labels = eval.used_true_labels || clip.true_label.has_value();
  }

  std::vector<std::vector<double>> per_stream_scores;
  for (const auto& ckpt : checkpoints) {
    per_stream_scores.push_back(score_clips(ckpt, joint_clips, graph));
    eval.stream_names.push_back(ckpt.stream);
    eval.per_stream.push_back(compute_metrics(per_stream_scores.back(), labels));
  }
  const std::vector<double> fused = fuse_streams(per_stream_scores);
  eval.fused = compute_metrics(fused, labels);

  eval.scored.reserve(joint_clips.size());
  for (std::size_t i = 0; i < joint_clips.size(); ++i)
    eval.scored.push_back(ScoredClip{joint_clips[i].participant_id, fused[i], labels[i]});
  return eval;
}

json metrics_to_json(const MetricsReport& m) {
  json j{{"n", m.n},         {"accuracy", m.accuracy},   {"precision", m.precision},
         {"recall", m.recall}, {"f1_macro", m.f1_macro}, {"f1_weighted", m.f1_weighted}};
  if (m.auroc) j["auroc"] = *m.auroc;
  return j;
}

json evaluation_to_json(const VariantEvaluation& eval) {
  json per_stream = json::object();
  for (std::size_t i = 0; i < eval.per_stream.size(); ++i) per_stream[eval.stream_names[i]] = metrics_to_json(eval.per_stream[i]);
  return json{{"label_source", eval.used_true_labels ? "true" : "observed"},
              {"per_stream", std::move(per_stream)},
              {"fused", metrics_to_json(eval.fused)}};
}

std::string metrics_csv(const VariantEvaluation& eval) {
  std::ostringstream os;
  os << "stream,n,accuracy,precision,recall,f1_macro,f1_weighted,auroc\n";
  const auto row = [&os](const std::string& name, const MetricsReport& m) {
    os << name << "," << m.n << "," << m.accuracy << "," << m.precision << "," << m.recall << "," << m.f1_macro << ","
       << m.f1_weighted << ",";
    if (m.auroc) os << *m.auroc;
    os << "\n";
  };
  for (std::size_t i = 0; i < eval.per_stream.size(); ++i) row(eval.stream_names[i], eval.per_stream[i]);
  row("fused", eval.fused);
  return os.str();
}

json bootstrap_to_json(const BootstrapReport& report) {
  json reps = json::array();
  for (const auto& m : report.replicate_metrics) reps.push_back(metrics_to_json(m));
  json accs = json::array();
  for (const auto& m : report.replicate_metrics) accs.push_back(m.accuracy);
  return json{{"n_participants", report.n_participants},
              {"replicates", report.replicates},
              {"replicate_metrics", std::move(reps)},
              {"accuracy_per_replicate", std::move(accs)},
              {"mean", metrics_to_json(report.mean)},
              {"std", metrics_to_json(report.stddev)}};
}

}  // namespace pulsar
