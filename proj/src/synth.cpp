#include "pulsar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pulsar/errors.hpp"
#include "pulsar/rng.hpp"

namespace pulsar {

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Rest pose of a right hand in normalized image coordinates, wrist at the
// bottom, fingers fanning upward (y grows downward). Index order matches the
// 21-vertex layout of HandGraph.
constexpr double kRestPose[21][2] = {
    {0.500, 0.850},                                                   // wrist
    {0.395, 0.780}, {0.330, 0.700}, {0.290, 0.620}, {0.265, 0.545},   // thumb
    {0.430, 0.600}, {0.420, 0.490}, {0.415, 0.415}, {0.410, 0.345},   // index
    {0.505, 0.585}, {0.510, 0.465}, {0.515, 0.385}, {0.520, 0.310},   // middle
    {0.575, 0.600}, {0.590, 0.490}, {0.600, 0.415}, {0.610, 0.350},   // ring
    {0.645, 0.630}, {0.670, 0.540}, {0.685, 0.475}, {0.700, 0.420}};  // pinky

// How strongly each vertex follows its fingertip's tapping displacement.
double follow_factor(int vertex, int tip) {
  if (vertex == tip) return 1.0;
  if (vertex == tip - 1) return 0.6;
  if (vertex == tip - 2) return 0.3;
  return 0.0;
}

struct SequencePlan {
  bool pd = false;
  Handedness hand = Handedness::Right;
  std::string participant_id;
};

KeypointSequence generate_sequence(const SynthConfig& cfg, const SequencePlan& plan, Rng& rng) {
  const SynthClassParams& cls = plan.pd ? cfg.pd : cfg.healthy;

  KeypointSequence seq;
  seq.participant_id = plan.participant_id;
  seq.hand = plan.hand;
  seq.fps = cfg.fps;
  seq.true_label = plan.pd ? TrueLabel::Positive : TrueLabel::Negative;
  seq.label = Label::Unlabeled;
  if (plan.pd && !rng.bernoulli(cfg.contamination)) seq.label = Label::Positive;

  double pose[21][2];
  for (int v = 0; v < 21; ++v) {
    pose[v][0] = plan.hand == Handedness::Right ? kRestPose[v][0] : 1.0 - kRestPose[v][0];
    pose[v][1] = kRestPose[v][1];
  }

  // tapping axis between the resting thumb tip and index fingertip
  double ux = pose[8][0] - pose[4][0];
  double uy = pose[8][1] - pose[4][1];
  const double rest_gap = std::sqrt(ux * ux + uy * uy);
  ux /= rest_gap;
  uy /= rest_gap;

  const double freq = std::max(0.3, rng.normal(cls.tap_freq_mean_hz, cls.tap_freq_sd_hz));
  const double amp0 = rest_gap * rng.uniform(1.00, 1.25);
  const double gap_min = 0.15 * rest_gap;
  double phase = rng.uniform(0.0, kTwoPi);

  const int lead_in = 3 + rng.uniform_int(6);
  const int lead_out = 3 + rng.uniform_int(6);
  const int tap_frames = static_cast<int>(std::lround(cfg.fps * cfg.duration_s));

  int taps_done = 0;
  int hesitation_left = 0;
  double tremor_x = 0.0, tremor_y = 0.0;
  const double tremor_sd = 0.5 * cls.jitter_sd;

  for (int t = 0; t < lead_in + tap_frames + lead_out; ++t) {
    if (t < lead_in || t >= lead_in + tap_frames) {
      seq.frames.push_back(Frame{});  // hand not visible yet / anymore
      continue;
    }

    if (hesitation_left > 0)
      --hesitation_left;
    else if (cls.hesitation_prob > 0.0 && rng.bernoulli(cls.hesitation_prob))
      hesitation_left = 1 + rng.uniform_int(5);
    const double speed = hesitation_left > 0 ? 0.2 : 1.0;
    phase += kTwoPi * freq * speed / cfg.fps;
    while (phase >= kTwoPi * static_cast<double>(taps_done + 1)) ++taps_done;

    const double amp = std::max(0.15 * amp0, amp0 * std::pow(1.0 - cls.amp_decay_per_tap, static_cast<double>(taps_done)));
    const double aperture = gap_min + amp * 0.5 * (1.0 - std::cos(phase));

    tremor_x = 0.95 * tremor_x + rng.normal(0.0, tremor_sd);
    tremor_y = 0.95 * tremor_y + rng.normal(0.0, tremor_sd);

    // both tips shift symmetrically along the tapping axis so their distance
    // equals the aperture; `close` > 0 pulls them together
    const double close = 0.5 * (rest_gap - aperture);

    Frame frame;
    frame.valid = true;
    frame.landmarks.resize(21);
    const bool low_conf_frame = rng.bernoulli(0.02);
    for (int v = 0; v < 21; ++v) {
      double x = pose[v][0] + tremor_x;
      double y = pose[v][1] + tremor_y;
      const double pull_thumb = follow_factor(v, 4);
      const double pull_index = follow_factor(v, 8);
      if (pull_thumb > 0.0) {
        x += pull_thumb * close * ux;
        y += pull_thumb * close * uy;
      } else if (pull_index > 0.0) {
        x -= pull_index * close * ux;
        y -= pull_index * close * uy;
      }
      x += rng.normal(0.0, cls.jitter_sd);
      y += rng.normal(0.0, cls.jitter_sd);
      Landmark& lm = frame.landmarks[static_cast<std::size_t>(v)];
      lm.x = std::clamp(x, 0.0, 1.0);
      lm.y = std::clamp(y, 0.0, 1.0);
      lm.confidence = rng.uniform(0.82, 0.99) * (low_conf_frame ? 0.4 : 1.0);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace

void SynthConfig::validate() const {
  if (healthy_count <= 0 || pd_count <= 0) throw ConfigError("synth: class counts must be positive");
  if (!(contamination >= 0.0 && contamination < 1.0)) throw ConfigError("synth: contamination must lie in [0,1)");
  if (!(fps > 0.0)) throw ConfigError("synth: fps must be positive");
  if (!(duration_s > 0.0)) throw ConfigError("synth: duration must be positive");
  for (const auto* cls : {&healthy, &pd}) {
    if (!(cls->tap_freq_mean_hz > 0.0)) throw ConfigError("synth: tap frequency must be positive");
    if (cls->tap_freq_sd_hz < 0.0 || cls->jitter_sd < 0.0) throw ConfigError("synth: noise parameters must be non-negative");
    if (cls->amp_decay_per_tap < 0.0 || cls->amp_decay_per_tap >= 1.0) throw ConfigError("synth: amplitude decay must lie in [0,1)");
    if (cls->hesitation_prob < 0.0 || cls->hesitation_prob >= 1.0) throw ConfigError("synth: hesitation probability must lie in [0,1)");
  }
}

SynthConfig synth_config_defaults() { return SynthConfig{}; }

std::vector<KeypointSequence> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<KeypointSequence> out;
  out.reserve(static_cast<std::size_t>(cfg.healthy_count + cfg.pd_count));
  char id[32];
  for (int i = 0; i < cfg.healthy_count + cfg.pd_count; ++i) {
    SequencePlan plan;
    plan.pd = i >= cfg.healthy_count;
    plan.hand = i % 2 == 0 ? Handedness::Right : Handedness::Left;
    std::snprintf(id, sizeof(id), "synth-%04d", i);
    plan.participant_id = id;
    Rng rng(derive_seed(cfg.seed, 0x9e1ca1 + static_cast<std::uint64_t>(i)));
    out.push_back(generate_sequence(cfg, plan, rng));
  }
  return out;
}

std::vector<double> aperture_signal(const KeypointSequence& seq) {
  std::vector<double> signal;
  for (const auto& f : seq.frames) {
    if (!f.valid) continue;
    const double dx = f.landmarks[4].x - f.landmarks[8].x;
    const double dy = f.landmarks[4].y - f.landmarks[8].y;
    signal.push_back(std::sqrt(dx * dx + dy * dy));
  }
  return signal;
}

double estimate_tap_frequency(const KeypointSequence& seq) {
  const std::vector<double> signal = aperture_signal(seq);
  if (signal.size() < 3) return 0.0;
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());
  int upward_crossings = 0;
  for (std::size_t i = 1; i < signal.size(); ++i)
    if (signal[i - 1] < mean && signal[i] >= mean) ++upward_crossings;
  const double seconds = static_cast<double>(signal.size()) / seq.fps;
  return static_cast<double>(upward_crossings) / seconds;
}

}  // namespace pulsar
