// pulsar: synthetic data generation, training, evaluation, statistical
// reporting, and the gradient self-check, wired together from the library.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pulsar/config.hpp"
#include "pulsar/errors.hpp"
#include "pulsar/experiment.hpp"
#include "pulsar/gradcheck.hpp"
#include "pulsar/stats.hpp"
#include "pulsar/synth.hpp"

namespace {

using nlohmann::json;
using namespace pulsar;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

struct BootstrapSpec {
  int participants = 120;
  int replicates = 20;
};

BootstrapSpec parse_bootstrap(const std::string& s) {
  BootstrapSpec spec;
  if (std::sscanf(s.c_str(), "%dx%d", &spec.participants, &spec.replicates) != 2 || spec.participants < 1 || spec.replicates < 1)
    throw ConfigError("--bootstrap expects NxR, e.g. 120x20");
  return spec;
}

int run_synth(const std::string& config_path, const std::string& out_path, std::uint64_t seed, bool seed_given) {
  SynthConfig cfg;
  if (!config_path.empty()) cfg = synth_config_from_json(load_config_file(config_path));
  if (seed_given) cfg.seed = seed;
  const std::vector<KeypointSequence> sequences = generate_synthetic(cfg);
  write_keypoint_file(sequences, out_path);

  int positives = 0, hidden = 0, unlabeled = 0;
  for (const auto& s : sequences) {
    if (s.label == Label::Positive) ++positives;
    else {
      ++unlabeled;
      if (s.true_label == TrueLabel::Positive) ++hidden;
    }
  }
  std::cout << "wrote " << sequences.size() << " sequences to " << out_path << "\n"
            << "  labeled positive:   " << positives << "\n"
            << "  unlabeled:          " << unlabeled << " (hidden positives: " << hidden << ")\n";
  return 0;
}

int run_train(const std::string& variant_name, const std::string& data_path, const std::string& out_dir,
              const std::string& config_path, std::uint64_t seed, bool seed_given, const std::string& risk_mode,
              double prior, bool prior_given, int threads) {
  ExperimentPlan plan;
  plan.variant = variant_from_string(variant_name);
  if (!config_path.empty()) {
    const json cfg = load_config_file(config_path);
    if (cfg.contains("train")) plan.train = train_config_from_json(cfg.at("train"));
    if (cfg.contains("model")) plan.model = model_config_from_json(cfg.at("model"));
    if (cfg.contains("val_fraction")) plan.val_fraction = cfg.at("val_fraction").get<double>();
    if (cfg.contains("augment")) plan.augment = cfg.at("augment").get<bool>();
  }
  if (seed_given) plan.train.seed = seed;
  if (!risk_mode.empty()) plan.train.risk.mode = risk_mode_from_string(risk_mode);
  if (prior_given) plan.train.risk.theta_p = prior;

  const std::vector<KeypointSequence> dataset = parse_keypoint_file(data_path);
  const TrainedVariant trained = train_variant(dataset, plan, threads, out_dir, &std::cout);
  std::cout << "variant " << to_string(trained.variant) << ": " << trained.checkpoints.size()
            << " checkpoint(s) written to " << out_dir << "\n";
  return 0;
}

int run_eval(const std::vector<std::string>& checkpoint_paths, const std::string& data_path, const std::string& out_dir,
             const std::string& bootstrap_arg, std::uint64_t seed) {
  std::vector<Checkpoint> checkpoints;
  for (const auto& p : checkpoint_paths) checkpoints.push_back(load_checkpoint(p));
  const std::vector<KeypointSequence> dataset = parse_keypoint_file(data_path);
  json data_report;
  const std::vector<Clip> clips = prepare_eval_clips(dataset, &data_report);
  const VariantEvaluation eval = evaluate_variant(checkpoints, clips);

  std::filesystem::create_directories(out_dir);
  json metrics = evaluation_to_json(eval);
  metrics["data_report"] = data_report;
  write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
  write_text(out_dir + "/metrics.csv", metrics_csv(eval));

  std::cout << "evaluated " << clips.size() << " clips (labels: " << (eval.used_true_labels ? "true" : "observed") << ")\n";
  for (std::size_t i = 0; i < eval.per_stream.size(); ++i)
    std::cout << "  " << eval.stream_names[i] << ": acc=" << eval.per_stream[i].accuracy << "\n";
  std::cout << "  fused: acc=" << eval.fused.accuracy;
  if (eval.fused.auroc) std::cout << " auroc=" << *eval.fused.auroc;
  else std::cout << " (single-class labels: AUROC omitted)";
  std::cout << "\n";

  if (!bootstrap_arg.empty()) {
    const BootstrapSpec spec = parse_bootstrap(bootstrap_arg);
    const BootstrapReport report = bootstrap_eval(eval.scored, spec.participants, spec.replicates, seed);
    write_text(out_dir + "/bootstrap.json", bootstrap_to_json(report).dump(2) + "\n");
    std::cout << "bootstrap " << spec.participants << "x" << spec.replicates << ": acc=" << report.mean.accuracy
              << " +/- " << report.stddev.accuracy << "\n";
  }
  return 0;
}

int run_report(const std::vector<std::string>& inputs, const std::vector<std::string>& names, const std::string& out_path,
               bool graph_dump) {
  if (graph_dump) {
    const HandGraph graph = build_hand_graph();
    const PartitionedAdjacency part = partition_adjacency(graph);
    json j;
    j["vertices"] = HandGraph::vertex_count;
    j["natural_edges"] = graph.natural_edges;
    j["augmented_edges"] = json{{"type1", graph.type1_edges}, {"type2", graph.type2_edges}, {"type3", graph.type3_edges}};
    std::vector<int> parent(graph.parent.begin(), graph.parent.end());
    j["parent_of"] = parent;
    json subsets = json::array();
    for (int k = 0; k < part.subset_count; ++k) {
      json rows = json::array();
      for (int u = 0; u < part.vertices; ++u) {
        json row = json::array();
        for (int v = 0; v < part.vertices; ++v) row.push_back(part.at(k, u, v));
        rows.push_back(std::move(row));
      }
      subsets.push_back(std::move(rows));
    }
    j["partition"] = json{{"strategy", to_string(part.strategy)}, {"subsets", std::move(subsets)}};
    const std::string text = j.dump(2) + "\n";
    if (out_path.empty()) std::cout << text;
    else write_text(out_path, text);
    return 0;
  }

  if (inputs.size() < 2) throw ConfigError("report: need at least 2 bootstrap files (accuracy matrices)");
  std::vector<std::vector<double>> columns;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DataError("report: " + path + " is not valid JSON: " + e.what());
    }
    columns.push_back(j.at("accuracy_per_replicate").get<std::vector<double>>());
    if (columns.back().size() != columns.front().size())
      throw DataError("report: replicate counts differ between inputs");
  }
  const std::size_t reps = columns.front().size();
  std::vector<std::vector<double>> accuracy(reps, std::vector<double>(columns.size()));
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t m = 0; m < columns.size(); ++m) accuracy[r][m] = columns[m][r];

  const FriedmanReport report = friedman_test(accuracy);
  std::vector<std::string> model_names = names;
  for (std::size_t i = model_names.size(); i < columns.size(); ++i) model_names.push_back("model" + std::to_string(i + 1));

  json j;
  j["models"] = model_names;
  j["replicates"] = reps;
  j["statistic"] = report.statistic;
  j["df"] = report.df;
  j["p_value"] = report.p_value;
  j["avg_ranks"] = report.avg_ranks;
  j["raw_p"] = report.raw_p;
  j["holm_adjusted_p"] = report.holm_adjusted_p;
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) std::cout << text;
  else write_text(out_path, text);

  std::cout << "Friedman chi2=" << report.statistic << " df=" << report.df << " p=" << report.p_value << "\n";
  for (std::size_t i = 0; i < model_names.size(); ++i)
    std::cout << "  " << model_names[i] << ": avg rank " << report.avg_ranks[i] << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  GradCheckOptions options;
  options.seed = seed;
  options.corrupt = corrupt;
  const std::vector<GradCheckResult> results = run_gradient_checks(options);
  bool all_pass = true;
  std::printf("%-28s %-12s %s\n", "primitive", "max_rel_err", "status");
  for (const auto& r : results) {
    std::printf("%-28s %-12.3e %s\n", r.name.c_str(), r.max_rel_err, r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    for (const auto& r : results)
      if (!r.pass) std::cerr << "gradient check failed: " << r.name << "\n";
    return kExitNumeric;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PULSAR: PU-learning spatio-temporal graph classifier for finger-tapping sequences"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, variant = "PULSAR", risk_mode, bootstrap_arg, corrupt;
  std::vector<std::string> checkpoint_paths, report_inputs, report_names;
  std::uint64_t seed = 0;
  double prior = 0.5;
  int threads = 1;
  bool graph_dump = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic finger-tapping dataset");
  synth->add_option("--config", config_path, "SynthConfig file (TOML or JSON)");
  auto* synth_seed = synth->add_option("--seed", seed, "generator seed (overrides config)");
  synth->add_option("--out", out_path, "output JSON-lines path")->required();

  auto* train = app.add_subcommand("train", "train one ablation variant");
  train->add_option("--variant", variant, "JS|JS_PU|JS_AC|JS_AC_PU|PULSAR");
  train->add_option("--data", data_path, "training dataset (JSON lines)")->required();
  train->add_option("--out", out_path, "output directory")->required();
  train->add_option("--config", config_path, "plan config file (TOML or JSON)");
  auto* train_seed = train->add_option("--seed", seed, "training seed (overrides config)");
  train->add_option("--risk-mode", risk_mode, "pn|pu|pu-nn (PU variants only)");
  auto* prior_opt = train->add_option("--prior", prior, "class prior theta_p");
  train->add_option("--threads", threads, "parallel stream trainings (PULSAR)");

  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on a dataset");
  eval->add_option("--ckpt", checkpoint_paths, "checkpoint file(s), one per stream")->required();
  eval->add_option("--data", data_path, "evaluation dataset (JSON lines)")->required();
  eval->add_option("--out", out_path, "output directory")->required();
  eval->add_option("--bootstrap", bootstrap_arg, "participant bootstrap NxR (e.g. 120x20)");
  eval->add_option("--seed", seed, "bootstrap seed");

  auto* report = app.add_subcommand("report", "Friedman/Holm comparison report or graph dump");
  report->add_option("--inputs", report_inputs, "bootstrap.json files, one per model");
  report->add_option("--names", report_names, "model names matching --inputs");
  report->add_option("--out", out_path, "output JSON path (default stdout)");
  report->add_flag("--graph", graph_dump, "dump the hand graph and partition matrices instead");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every adjoint");
  gradcheck->add_option("--seed", seed, "check seed");
  gradcheck->add_option("--corrupt", corrupt, "test hook: corrupt the named primitive's gradient");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(config_path, out_path, seed, !synth_seed->empty());
    if (train->parsed())
      return run_train(variant, data_path, out_path, config_path, seed, !train_seed->empty(), risk_mode, prior,
                       !prior_opt->empty(), threads);
    if (eval->parsed()) return run_eval(checkpoint_paths, data_path, out_path, bootstrap_arg, seed);
    if (report->parsed()) return run_report(report_inputs, report_names, out_path, graph_dump);
    if (gradcheck->parsed()) return run_gradcheck(seed, corrupt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
