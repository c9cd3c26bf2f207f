#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pulsar/data.hpp"

namespace pulsar {

// Class-conditional kinematics of the simulated tapping motion.
struct SynthClassParams {
  double tap_freq_mean_hz = 4.0;
  double tap_freq_sd_hz = 0.5;
  double amp_decay_per_tap = 0.0;  // fractional aperture loss per completed tap
  double jitter_sd = 0.003;        // per-frame landmark noise, normalized units
  double hesitation_prob = 0.0;    // chance per frame of a brief slowdown
};

struct SynthConfig {
  int healthy_count = 100;
  int pd_count = 100;
  SynthClassParams healthy{4.0, 0.5, 0.0, 0.003, 0.0};
  SynthClassParams pd{2.0, 0.4, 0.03, 0.010, 0.04};
  double contamination = 0.2;  // fraction of PD-like sequences emitted as unlabeled
  double fps = 30.0;
  double duration_s = 3.5;  // tapping time; lead-in/out invalid frames come on top
  std::uint64_t seed = 0;

  void validate() const;
};

SynthConfig synth_config_defaults();

// One participant per sequence; PD-like sequences are the positives and a
// `contamination` fraction of them hides in the unlabeled pool. True labels
// are recorded separately so evaluation can score against ground truth.
std::vector<KeypointSequence> generate_synthetic(const SynthConfig& cfg);

// Aperture signal between thumb tip and index fingertip over valid frames.
std::vector<double> aperture_signal(const KeypointSequence& seq);

// Mean-crossing estimate of the tapping rate in Hz; the reference classifier
// for generated data thresholds this value.
double estimate_tap_frequency(const KeypointSequence& seq);

}  // namespace pulsar
