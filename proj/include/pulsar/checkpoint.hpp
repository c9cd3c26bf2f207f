#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pulsar/pu_risk.hpp"
#include "pulsar/tensor.hpp"

namespace pulsar {

inline constexpr char kCheckpointMagic[] = "PULSARCK1";

struct EpochRecord {
  int epoch = 0;
  int steps = 0;  // optimizer steps taken this epoch
  RiskBreakdown train_risk;
  double val_accuracy = 0.0;
  double lr = 0.0;
};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;  // held in double; written in the dtype below
  bool is_stat = false;        // BN running statistics rather than a parameter
};

// Trained model snapshot: JSON header (config echo, named entries with shapes
// and byte offsets, training history) followed by a little-endian IEEE-754
// payload. Round-trips bit-exactly.
struct Checkpoint {
  std::string dtype = "f64";  // f32 | f64
  nlohmann::json model_config;
  nlohmann::json train_config;
  std::string stream = "joint";
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochRecord> history;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry& entry(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json risk_breakdown_to_json(const RiskBreakdown& r);
RiskBreakdown risk_breakdown_from_json(const nlohmann::json& j);

}  // namespace pulsar
