#include <doctest.h>

#include "pulsar/config.hpp"
#include "pulsar/errors.hpp"
#include "pulsar/experiment.hpp"

using namespace pulsar;
using nlohmann::json;

TEST_SUITE("toml_subset") {
  TEST_CASE("sections, dotted keys, comments, and scalars") {
    const std::string text = R"(
# generator settings
healthy_count = 10
pd_count = 20        # inline comment
contamination = 0.25
seed = 7

[healthy]
tap_freq_mean_hz = 4.5
jitter_sd = 0.001

[pd]
tap_freq_mean_hz = 2.0
)";
    const json j = toml_subset_to_json(text);
    CHECK(j.at("healthy_count").get<int>() == 10);
    CHECK(j.at("contamination").get<double>() == doctest::Approx(0.25));
    CHECK(j.at("healthy").at("tap_freq_mean_hz").get<double>() == doctest::Approx(4.5));
    CHECK(j.at("pd").at("tap_freq_mean_hz").get<double>() == doctest::Approx(2.0));

    const SynthConfig cfg = synth_config_from_json(j);
    CHECK(cfg.healthy_count == 10);
    CHECK(cfg.pd_count == 20);
    CHECK(cfg.healthy.tap_freq_mean_hz == doctest::Approx(4.5));
    CHECK(cfg.pd.tap_freq_sd_hz == doctest::Approx(0.4));  // untouched default
  }

  TEST_CASE("strings, booleans, arrays, dotted keys") {
    const json j = toml_subset_to_json(R"(
name = "experiment one"
augment = false
model.channels = [16, 32]
model.dropout = 0.5
)");
    CHECK(j.at("name").get<std::string>() == "experiment one");
    CHECK(j.at("augment").get<bool>() == false);
    CHECK(j.at("model").at("channels").get<std::vector<int>>() == std::vector<int>{16, 32});
  }

  TEST_CASE("malformed lines are rejected with the line number") {
    CHECK_THROWS_WITH_AS(toml_subset_to_json("key value\n"), doctest::Contains("line 1"), ConfigError);
    CHECK_THROWS_AS(toml_subset_to_json("[section\nk = 1\n"), ConfigError);
    CHECK_THROWS_AS(toml_subset_to_json("k = \"unterminated\n"), ConfigError);
    CHECK_THROWS_AS(toml_subset_to_json("k = what\n"), ConfigError);
  }
}

TEST_SUITE("config_structs") {
  TEST_CASE("synth config round-trips and rejects unknown keys") {
    SynthConfig cfg;
    cfg.healthy_count = 3;
    cfg.pd.jitter_sd = 0.123;
    const SynthConfig back = synth_config_from_json(synth_config_to_json(cfg));
    CHECK(back.healthy_count == 3);
    CHECK(back.pd.jitter_sd == doctest::Approx(0.123));
    json j = synth_config_to_json(cfg);
    j["typo_field"] = 1;
    CHECK_THROWS_WITH_AS(synth_config_from_json(j), doctest::Contains("typo_field"), ConfigError);
  }

  TEST_CASE("train config round-trip preserves risk settings") {
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.lr = 1e-3;
    cfg.risk.mode = RiskMode::PUUnbiased;
    cfg.risk.theta_p = 0.4;
    cfg.stream = StreamKind::Velocity;
    cfg.precision = "f32";
    const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(back.batch_size == 32);
    CHECK(back.risk.mode == RiskMode::PUUnbiased);
    CHECK(back.risk.theta_p == doctest::Approx(0.4));
    CHECK(back.stream == StreamKind::Velocity);
    CHECK(back.precision == "f32");
  }

  TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.plateau_factor = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.precision = "f16";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("model config round-trip") {
    ModelConfig cfg;
    cfg.channels = {8, 16};
    cfg.temporal_kernel = 5;
    cfg.adaptive = true;
    const ModelConfig back = model_config_from_json(model_config_to_json(cfg));
    CHECK(back.channels == std::vector<int>{8, 16});
    CHECK(back.temporal_kernel == 5);
    CHECK(back.adaptive);
  }
}

TEST_SUITE("variants") {
  TEST_CASE("the five-variant family maps to (adaptive, pu, streams)") {
    CHECK(!variant_spec(Variant::JS).adaptive);
    CHECK(!variant_spec(Variant::JS).pu);
    CHECK(variant_spec(Variant::JS).streams == std::vector<StreamKind>{StreamKind::Joint});
    CHECK(!variant_spec(Variant::JS_PU).adaptive);
    CHECK(variant_spec(Variant::JS_PU).pu);
    CHECK(variant_spec(Variant::JS_AC).adaptive);
    CHECK(!variant_spec(Variant::JS_AC).pu);
    CHECK(variant_spec(Variant::JS_AC_PU).adaptive);
    CHECK(variant_spec(Variant::JS_AC_PU).pu);
    const VariantSpec pulsar = variant_spec(Variant::PULSAR);
    CHECK(pulsar.adaptive);
    CHECK(pulsar.pu);
    CHECK(pulsar.streams == std::vector<StreamKind>{StreamKind::Joint, StreamKind::Bone, StreamKind::Velocity,
                                                    StreamKind::Acceleration});
    CHECK_THROWS_AS(variant_from_string("JSX"), ConfigError);
    CHECK(to_string(variant_from_string("JS_AC_PU")) == "JS_AC_PU");
  }
}
