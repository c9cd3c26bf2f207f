#include "pulsar/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "pulsar/errors.hpp"
#include "pulsar/rng.hpp"

namespace pulsar {

using nlohmann::json;

Label label_from_string(const std::string& s) {
  if (s == "positive") return Label::Positive;
  if (s == "unlabeled") return Label::Unlabeled;
  throw DataError("unknown label '" + s + "' (expected positive|unlabeled)");
}

TrueLabel true_label_from_string(const std::string& s) {
  if (s == "positive") return TrueLabel::Positive;
  if (s == "negative") return TrueLabel::Negative;
  throw DataError("unknown true_label '" + s + "' (expected positive|negative)");
}

std::string to_string(Label l) { return l == Label::Positive ? "positive" : "unlabeled"; }
std::string to_string(TrueLabel l) { return l == TrueLabel::Positive ? "positive" : "negative"; }

int KeypointSequence::valid_frames() const {
  int n = 0;
  for (const auto& f : frames) n += f.valid ? 1 : 0;
  return n;
}

std::string sequence_to_json_line(const KeypointSequence& seq) {
  json j;
  j["participant_id"] = seq.participant_id;
  j["hand"] = to_string(seq.hand);
  j["label"] = to_string(seq.label);
  if (seq.true_label) j["true_label"] = to_string(*seq.true_label);
  j["fps"] = seq.fps;
  json frames = json::array();
  for (const auto& f : seq.frames) {
    if (!f.valid) {
      frames.push_back(nullptr);
      continue;
    }
    json pts = json::array();
    for (const auto& lm : f.landmarks) pts.push_back(json::array({lm.x, lm.y, lm.confidence}));
    frames.push_back(std::move(pts));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

KeypointSequence sequence_from_json_line(const std::string& line, int line_number) {
  const std::string where = "line " + std::to_string(line_number);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON at " + where + ": " + e.what());
  }
  try {
    KeypointSequence seq;
    seq.participant_id = j.at("participant_id").get<std::string>();
    seq.hand = handedness_from_string(j.at("hand").get<std::string>());
    seq.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("true_label") && !j["true_label"].is_null())
      seq.true_label = true_label_from_string(j["true_label"].get<std::string>());
    seq.fps = j.at("fps").get<double>();
    if (!(seq.fps > 0.0)) throw DataError("fps must be positive at " + where);
    const json& frames = j.at("frames");
    if (!frames.is_array()) throw DataError("frames must be an array at " + where);
    int frame_index = 0;
    for (const json& fj : frames) {
      Frame f;
      if (!fj.is_null()) {
        if (!fj.is_array() || fj.size() != HandGraph::vertex_count)
          throw DataError("frame " + std::to_string(frame_index) + " at " + where + " must have " +
                          std::to_string(HandGraph::vertex_count) + " landmarks, got " + std::to_string(fj.size()));
        f.valid = true;
        f.landmarks.reserve(HandGraph::vertex_count);
        for (const json& pj : fj) {
          if (!pj.is_array() || pj.size() != 3)
            throw DataError("frame " + std::to_string(frame_index) + " at " + where + " has a landmark that is not [x,y,conf]");
          Landmark lm{pj[0].get<double>(), pj[1].get<double>(), pj[2].get<double>()};
          if (lm.x < 0.0 || lm.x > 1.0 || lm.y < 0.0 || lm.y > 1.0)
            throw DataError("coordinate out of [0,1] in frame " + std::to_string(frame_index) + " at " + where);
          if (lm.confidence < 0.0 || lm.confidence > 1.0)
            throw DataError("confidence out of [0,1] in frame " + std::to_string(frame_index) + " at " + where);
          f.landmarks.push_back(lm);
        }
      }
      seq.frames.push_back(std::move(f));
      ++frame_index;
    }
    return seq;
  } catch (const json::exception& e) {
    throw DataError("invalid sequence record at " + where + ": " + e.what());
  }
}

std::vector<KeypointSequence> parse_keypoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open keypoint file: " + path);
  std::vector<KeypointSequence> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    out.push_back(sequence_from_json_line(line, line_number));
  }
  return out;
}

void write_keypoint_file(const std::vector<KeypointSequence>& sequences, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write keypoint file: " + path);
  for (const auto& seq : sequences) out << sequence_to_json_line(seq) << "\n";
}

KeypointSequence clean_sequence(const KeypointSequence& seq, CleanStats* stats) {
  KeypointSequence out = seq;
  out.frames.clear();
  for (const auto& f : seq.frames) {
    if (!f.valid) continue;
    double conf = 0.0;
    for (const auto& lm : f.landmarks) conf += lm.confidence;
    conf /= static_cast<double>(f.landmarks.size());
    if (conf < 0.5) continue;
    out.frames.push_back(f);
  }
  if (stats) {
    stats->frames_in = static_cast<int>(seq.frames.size());
    stats->frames_dropped = static_cast<int>(seq.frames.size() - out.frames.size());
    stats->emptied = out.frames.empty();
  }
  return out;
}

std::vector<Clip> segment_clips(const KeypointSequence& seq, int frames) {
  if (frames <= 0) throw ConfigError("segment_clips: window must be positive");
  std::vector<Clip> clips;
  const int n = static_cast<int>(seq.frames.size());
  for (int start = 0; start + frames <= n; start += frames) {
    Clip clip;
    clip.frames = frames;
    clip.participant_id = seq.participant_id;
    clip.hand = seq.hand;
    clip.clip_index = static_cast<int>(clips.size());
    clip.label = seq.label;
    clip.true_label = seq.true_label;
    clip.data.assign(static_cast<std::size_t>(Clip::channels) * frames * clip.vertices, 0.0);
    for (int t = 0; t < frames; ++t) {
      const Frame& f = seq.frames[static_cast<std::size_t>(start + t)];
      if (!f.valid || static_cast<int>(f.landmarks.size()) != clip.vertices)
        throw DataError("segment_clips: clip window contains an invalid frame; clean the sequence first");
      for (int v = 0; v < clip.vertices; ++v) {
        clip.data[(static_cast<std::size_t>(0) * frames + t) * clip.vertices + v] = f.landmarks[static_cast<std::size_t>(v)].x;
        clip.data[(static_cast<std::size_t>(1) * frames + t) * clip.vertices + v] = f.landmarks[static_cast<std::size_t>(v)].y;
      }
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::array<Clip, 4> augment_clip(const Clip& clip) {
  std::array<Clip, 4> out{clip, clip, clip, clip};
  const char* tags[4] = {"id", "h", "v", "hv"};
  for (int a = 0; a < 4; ++a) {
    out[static_cast<std::size_t>(a)].augmentation = tags[a];
    const bool flip_x = a == 1 || a == 3;
    const bool flip_y = a == 2 || a == 3;
    auto& data = out[static_cast<std::size_t>(a)].data;
    const std::size_t plane = static_cast<std::size_t>(clip.frames) * clip.vertices;
    if (flip_x)
      for (std::size_t i = 0; i < plane; ++i) data[i] = 1.0 - data[i];
    if (flip_y)
      for (std::size_t i = 0; i < plane; ++i) data[plane + i] = 1.0 - data[plane + i];
  }
  return out;
}

std::pair<std::vector<KeypointSequence>, std::vector<KeypointSequence>> split_by_participant(
    const std::vector<KeypointSequence>& sequences, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("split: val_fraction must lie in [0,1)");
  std::map<std::string, Label> participant_label;
  for (const auto& seq : sequences) {
    auto [it, inserted] = participant_label.emplace(seq.participant_id, seq.label);
    if (!inserted && seq.label == Label::Positive) it->second = Label::Positive;
  }
  if (participant_label.size() < 2) throw DataError("split: need at least 2 participants");

  std::vector<std::string> positive_ids, unlabeled_ids;
  for (const auto& [id, label] : participant_label)
    (label == Label::Positive ? positive_ids : unlabeled_ids).push_back(id);

  Rng rng(derive_seed(seed, 0x5317));
  std::set<std::string> val_ids;
  for (auto* stratum : {&positive_ids, &unlabeled_ids}) {
    if (stratum->empty()) continue;
    rng.shuffle(stratum->begin(), stratum->end());
    const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(stratum->size())));
    for (std::size_t i = 0; i < n_val && i < stratum->size(); ++i) val_ids.insert((*stratum)[i]);
  }
  // keep both sides non-empty
  if (val_ids.empty() && val_fraction > 0.0) val_ids.insert(positive_ids.empty() ? unlabeled_ids.front() : positive_ids.front());
  if (val_ids.size() == participant_label.size()) val_ids.erase(val_ids.begin());

  std::pair<std::vector<KeypointSequence>, std::vector<KeypointSequence>> out;
  for (const auto& seq : sequences)
    (val_ids.count(seq.participant_id) ? out.second : out.first).push_back(seq);
  return out;
}

}  // namespace pulsar
