#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pulsar/hand_graph.hpp"

namespace pulsar {

// Observed label: self-reported positives, everyone else unlabeled.
enum class Label { Positive, Unlabeled };
// Ground truth carried by synthetic data only; evaluation scores against it.
enum class TrueLabel { Positive, Negative };

Label label_from_string(const std::string& s);
TrueLabel true_label_from_string(const std::string& s);
std::string to_string(Label l);
std::string to_string(TrueLabel l);

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
};

struct Frame {
  bool valid = false;
  std::vector<Landmark> landmarks;  // 21 entries when valid
};

// One participant-hand recording of the tapping task.
struct KeypointSequence {
  std::string participant_id;
  Handedness hand = Handedness::Right;
  Label label = Label::Unlabeled;
  std::optional<TrueLabel> true_label;
  double fps = 30.0;
  std::vector<Frame> frames;

  int valid_frames() const;
};

// Fixed-length window of x-y coordinates, laid out channels x frames x vertices.
struct Clip {
  static constexpr int channels = 2;
  int frames = 80;
  int vertices = HandGraph::vertex_count;
  std::vector<double> data;

  std::string participant_id;
  Handedness hand = Handedness::Right;
  int clip_index = 0;
  std::string augmentation = "id";  // id | h | v | hv
  Label label = Label::Unlabeled;
  std::optional<TrueLabel> true_label;

  // label used for scoring: ground truth when present, observed otherwise
  bool eval_positive() const {
    return true_label ? *true_label == TrueLabel::Positive : label == Label::Positive;
  }
};

struct CleanStats {
  int frames_in = 0;
  int frames_dropped = 0;
  bool emptied = false;
};

// JSON-lines dataset: one sequence object per line, frames are either null
// (invalid) or an array of 21 [x, y, confidence] triplets.
std::vector<KeypointSequence> parse_keypoint_file(const std::string& path);
void write_keypoint_file(const std::vector<KeypointSequence>& sequences, const std::string& path);

std::string sequence_to_json_line(const KeypointSequence& seq);
KeypointSequence sequence_from_json_line(const std::string& line, int line_number = 0);

// Drops invalid frames and frames whose mean landmark confidence is below 0.5;
// order is preserved.
KeypointSequence clean_sequence(const KeypointSequence& seq, CleanStats* stats = nullptr);

// Consecutive non-overlapping windows of exactly `frames`; the remainder is
// discarded. Sequences shorter than one window yield nothing.
std::vector<Clip> segment_clips(const KeypointSequence& seq, int frames = 80);

// Flip family {id, h, v, hv} in normalized coordinate space; provenance and
// labels carry over.
std::array<Clip, 4> augment_clip(const Clip& clip);

// Participant-granular stratified split; no participant appears on both sides.
std::pair<std::vector<KeypointSequence>, std::vector<KeypointSequence>> split_by_participant(
    const std::vector<KeypointSequence>& sequences, double val_fraction, std::uint64_t seed);

}  // namespace pulsar
