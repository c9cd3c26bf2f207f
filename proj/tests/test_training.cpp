#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pulsar/rng.hpp"
#include "pulsar/training.hpp"

using namespace pulsar;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pulsar_train_" + name)).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// two sharply separated synthetic clip classes on the real hand geometry
std::vector<Clip> toy_clips(int n, int frames, std::uint64_t seed, double separation = 0.3) {
  Rng rng(seed);
  std::vector<Clip> clips;
  for (int i = 0; i < n; ++i) {
    Clip clip;
    clip.frames = frames;
    clip.participant_id = "toy" + std::to_string(i);
    clip.label = i % 2 == 0 ? Label::Positive : Label::Unlabeled;
    const double base = i % 2 == 0 ? 0.5 + separation / 2 : 0.5 - separation / 2;
    clip.data.resize(static_cast<std::size_t>(Clip::channels) * frames * clip.vertices);
    for (double& v : clip.data) v = base + rng.normal(0.0, 0.01);
    clips.push_back(std::move(clip));
  }
  return clips;
}

ModelConfig toy_model(int frames) {
  ModelConfig cfg;
  cfg.frames = frames;
  cfg.temporal_kernel = 3;
  cfg.channels = {4, 8};
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_SUITE("plateau") {
  TEST_CASE("six flat epochs at patience 5 halve the rate after the sixth") {
    PlateauState state{1e-4, 0.5, 5, -1.0, 0};
    const double accs[] = {0.6, 0.6, 0.6, 0.6, 0.6, 0.6};
    double lr = state.lr;
    for (int i = 0; i < 5; ++i) {
      lr = plateau_step(state, accs[i]);
      CHECK(lr == 1e-4);
    }
    lr = plateau_step(state, accs[5]);
    CHECK(lr == doctest::Approx(5e-5));
  }

  TEST_CASE("monotone improvement never reduces the rate") {
    PlateauState state{1e-3, 0.5, 2, -1.0, 0};
    for (int i = 0; i < 20; ++i) CHECK(plateau_step(state, 0.5 + 0.01 * i) == 1e-3);
  }

  TEST_CASE("improvement resets the counter") {
    PlateauState state{1e-3, 0.5, 5, -1.0, 0};
    plateau_step(state, 0.6);
    for (int i = 0; i < 4; ++i) plateau_step(state, 0.6);  // stale = 4
    CHECK(plateau_step(state, 0.65) == 1e-3);              // reset, no reduction
    for (int i = 0; i < 4; ++i) CHECK(plateau_step(state, 0.6) == 1e-3);
    CHECK(plateau_step(state, 0.6) == doctest::Approx(5e-4));  // fifth stale epoch
  }

  TEST_CASE("accuracy domain is validated") {
    PlateauState state;
    CHECK_THROWS_AS(plateau_step(state, 1.5), ConfigError);
  }

  TEST_CASE("matches a reference automaton on random traces") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
      const int patience = 1 + rng.uniform_int(6);
      const double factor = rng.uniform(0.1, 0.9);
      PlateauState state{1.0, factor, patience, -1.0, 0};
      // independent reference: explicit best/counter bookkeeping
      double ref_lr = 1.0, ref_best = -1.0;
      int ref_count = 0;
      for (int e = 0; e < 40; ++e) {
        const double acc = rng.uniform_int(5) * 0.25;  // coarse grid provokes ties
        const double lr = plateau_step(state, acc);
        if (acc > ref_best) {
          ref_best = acc;
          ref_count = 0;
        } else if (++ref_count >= patience) {
          ref_lr *= factor;
          ref_count = 0;
        }
        CHECK(lr == doctest::Approx(ref_lr).epsilon(1e-12));
      }
    }
  }
}

TEST_SUITE("checkpoint_io") {
  TEST_CASE("save/load/save is byte-identical") {
    Checkpoint ckpt;
    ckpt.dtype = "f64";
    ckpt.model_config = model_config_to_json(toy_model(16));
    ckpt.train_config = train_config_to_json(TrainConfig{});
    ckpt.stream = "bone";
    ckpt.best_epoch = 3;
    ckpt.best_val_accuracy = 0.75;
    ckpt.history.push_back(EpochRecord{1, 2, RiskBreakdown{0.4, 0.2, 0.2, false}, 0.7, 1e-4});
    Rng rng(5);
    for (int i = 0; i < 3; ++i) {
      CheckpointEntry e;
      e.name = "param" + std::to_string(i);
      e.shape = Shape{2, 3};
      for (int j = 0; j < 6; ++j) e.values.push_back(rng.normal());
      ckpt.entries.push_back(std::move(e));
    }
    const std::string p1 = temp_file("ck1.ckpt");
    const std::string p2 = temp_file("ck2.ckpt");
    save_checkpoint(ckpt, p1);
    Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
    CHECK(loaded.entries[1].values == ckpt.entries[1].values);
    CHECK(loaded.history[0].steps == 2);
  }

  TEST_CASE("f32 payloads round-trip exactly") {
    Checkpoint ckpt;
    ckpt.dtype = "f32";
    ckpt.model_config = model_config_to_json(toy_model(16));
    ckpt.train_config = train_config_to_json(TrainConfig{});
    CheckpointEntry e;
    e.name = "w";
    e.shape = Shape{4};
    e.values = {1.0f, 0.25f, static_cast<double>(1.1f), -3.75f};
    ckpt.entries.push_back(e);
    const std::string p1 = temp_file("ck3.ckpt");
    const std::string p2 = temp_file("ck4.ckpt");
    save_checkpoint(ckpt, p1);
    save_checkpoint(load_checkpoint(p1), p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
  }

  TEST_CASE("corrupted magic is rejected naming the expected tag") {
    const std::string path = temp_file("bad.ckpt");
    std::ofstream out(path, std::ios::binary);
    out << "NOTMAGIC1\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("PULSARCK1"), DataError);
  }

  TEST_CASE("truncated payload is rejected") {
    Checkpoint ckpt;
    ckpt.dtype = "f64";
    ckpt.model_config = model_config_to_json(toy_model(16));
    ckpt.train_config = train_config_to_json(TrainConfig{});
    CheckpointEntry e;
    e.name = "w";
    e.shape = Shape{8};
    e.values.assign(8, 1.0);
    ckpt.entries.push_back(e);
    const std::string path = temp_file("trunc.ckpt");
    save_checkpoint(ckpt, path);
    const std::string bytes = read_bytes(path);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 12));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
}

TEST_SUITE("train_stream") {
  TEST_CASE("toy overfit: PN mode drives the training risk below 0.1") {
    const int frames = 16;
    const auto clips = toy_clips(20, frames, 77);
    TrainConfig cfg;
    cfg.batch_size = 64;  // single batch per epoch
    cfg.lr = 1e-2;
    cfg.max_epochs = 200;
    cfg.risk.mode = RiskMode::PN;
    cfg.seed = 5;
    const Checkpoint ckpt = train_stream<double>(toy_model(frames), clips, clips, cfg, partition_adjacency(build_hand_graph()));
    CHECK(ckpt.history.size() == 200);
    CHECK(ckpt.history.back().train_risk.total < 0.1);
    CHECK(ckpt.best_val_accuracy == doctest::Approx(1.0));
  }

  TEST_CASE("steps per epoch is ceil(n / batch)") {
    const int frames = 16;
    const auto clips = toy_clips(10, frames, 3);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 2;
    cfg.risk.mode = RiskMode::PN;
    const Checkpoint ckpt = train_stream<double>(toy_model(frames), clips, clips, cfg, partition_adjacency(build_hand_graph()));
    for (const auto& e : ckpt.history) CHECK(e.steps == 3);  // ceil(10/4)
  }

  TEST_CASE("recorded best accuracy equals the history maximum") {
    const int frames = 16;
    const auto clips = toy_clips(12, frames, 11);
    TrainConfig cfg;
    cfg.batch_size = 6;
    cfg.lr = 5e-3;
    cfg.max_epochs = 8;
    cfg.risk.mode = RiskMode::PN;
    const Checkpoint ckpt = train_stream<double>(toy_model(frames), clips, clips, cfg, partition_adjacency(build_hand_graph()));
    double best = 0.0;
    for (const auto& e : ckpt.history) best = std::max(best, e.val_accuracy);
    CHECK(ckpt.best_val_accuracy == doctest::Approx(best));
  }

  TEST_CASE("fixed seed reproduces identical checkpoint bytes") {
    const int frames = 16;
    const auto clips = toy_clips(10, frames, 21);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.max_epochs = 3;
    cfg.risk.mode = RiskMode::PUNonNegative;
    cfg.seed = 123;
    const auto adjacency = partition_adjacency(build_hand_graph());
    const std::string p1 = temp_file("det1.ckpt");
    const std::string p2 = temp_file("det2.ckpt");
    save_checkpoint(train_stream<double>(toy_model(frames), clips, clips, cfg, adjacency), p1);
    save_checkpoint(train_stream<double>(toy_model(frames), clips, clips, cfg, adjacency), p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
  }

  TEST_CASE("reloaded checkpoints reproduce validation accuracy") {
    const int frames = 16;
    const auto clips = toy_clips(14, frames, 31);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 5e-3;
    cfg.max_epochs = 6;
    cfg.risk.mode = RiskMode::PN;
    const auto adjacency = partition_adjacency(build_hand_graph());
    const Checkpoint ckpt = train_stream<double>(toy_model(frames), clips, clips, cfg, adjacency);

    NetworkParamsT<double> params = network_from_checkpoint<double>(ckpt);
    const auto adj = adjacency_tensors<double>(adjacency);
    const auto scores = detail::forward_scores(params, adj, clips, cfg.batch_size);
    int correct = 0;
    for (std::size_t i = 0; i < clips.size(); ++i)
      correct += (positive_decision(scores[i]) == (clips[i].label == Label::Positive)) ? 1 : 0;
    CHECK(static_cast<double>(correct) / static_cast<double>(clips.size()) == doctest::Approx(ckpt.best_val_accuracy));
  }

  TEST_CASE("loading under a mismatched model config is a shape error") {
    const int frames = 16;
    const auto clips = toy_clips(8, frames, 41);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 1;
    cfg.risk.mode = RiskMode::PN;
    Checkpoint ckpt = train_stream<double>(toy_model(frames), clips, clips, cfg, partition_adjacency(build_hand_graph()));
    ModelConfig other = toy_model(frames);
    other.channels = {5, 9};
    ckpt.model_config = model_config_to_json(other);  // entries no longer match
    CHECK_THROWS_AS(network_from_checkpoint<double>(ckpt), DataError);
  }

  TEST_CASE("label availability preconditions") {
    const int frames = 16;
    auto clips = toy_clips(8, frames, 51);
    for (auto& c : clips) c.label = Label::Positive;
    TrainConfig cfg;
    cfg.risk.mode = RiskMode::PUNonNegative;
    CHECK_THROWS_AS(train_stream<double>(toy_model(frames), clips, clips, cfg, partition_adjacency(build_hand_graph())),
                    DataError);
    CHECK_THROWS_AS(train_stream<double>(toy_model(frames), {}, clips, cfg, partition_adjacency(build_hand_graph())),
                    DataError);
  }
}
