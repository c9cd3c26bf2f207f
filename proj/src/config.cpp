#include "pulsar/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "pulsar/errors.hpp"
#include "pulsar/training.hpp"

namespace pulsar {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

json parse_toml_value(const std::string& raw, int line_no) {
  const std::string v = strip(raw);
  if (v.empty()) throw ConfigError("toml: empty value on line " + std::to_string(line_no));
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw ConfigError("toml: unterminated string on line " + std::to_string(line_no));
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '[') {
    if (v.back() != ']') throw ConfigError("toml: unterminated array on line " + std::to_string(line_no));
    json arr = json::array();
    std::string body = v.substr(1, v.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (strip(item).empty()) continue;
      arr.push_back(parse_toml_value(item, line_no));
    }
    return arr;
  }
  try {
    if (v.find_first_of(".eE") != std::string::npos) return std::stod(v);
    return std::stoll(v);
  } catch (const std::exception&) {
    throw ConfigError("toml: cannot parse value '" + v + "' on line " + std::to_string(line_no));
  }
}

void insert_dotted(json& root, const std::string& dotted, json value, int line_no) {
  json* cur = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = strip(dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (part.empty()) throw ConfigError("toml: empty key component on line " + std::to_string(line_no));
    if (dot == std::string::npos) {
      (*cur)[part] = std::move(value);
      return;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

}  // namespace

json toml_subset_to_json(const std::string& text) {
  json root = json::object();
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments outside strings
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line = line.substr(0, i);
        break;
      }
    }
    const std::string t = strip(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("toml: malformed section header on line " + std::to_string(line_no));
      section = strip(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("toml: expected key = value on line " + std::to_string(line_no));
    const std::string key = strip(t.substr(0, eq));
    json value = parse_toml_value(t.substr(eq + 1), line_no);
    insert_dotted(root, section.empty() ? key : section + "." + key, std::move(value), line_no);
  }
  return root;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") return toml_subset_to_json(text);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

namespace {

SynthClassParams class_params_from_json(const json& j, const SynthClassParams& defaults, const std::string& where) {
  check_keys(j, {"tap_freq_mean_hz", "tap_freq_sd_hz", "amp_decay_per_tap", "jitter_sd", "hesitation_prob"}, where);
  SynthClassParams p = defaults;
  maybe(j, "tap_freq_mean_hz", p.tap_freq_mean_hz);
  maybe(j, "tap_freq_sd_hz", p.tap_freq_sd_hz);
  maybe(j, "amp_decay_per_tap", p.amp_decay_per_tap);
  maybe(j, "jitter_sd", p.jitter_sd);
  maybe(j, "hesitation_prob", p.hesitation_prob);
  return p;
}

json class_params_to_json(const SynthClassParams& p) {
  return json{{"tap_freq_mean_hz", p.tap_freq_mean_hz},
              {"tap_freq_sd_hz", p.tap_freq_sd_hz},
              {"amp_decay_per_tap", p.amp_decay_per_tap},
              {"jitter_sd", p.jitter_sd},
              {"hesitation_prob", p.hesitation_prob}};
}

}  // namespace

SynthConfig synth_config_from_json(const json& j) {
  check_keys(j, {"healthy_count", "pd_count", "healthy", "pd", "contamination", "fps", "duration_s", "seed"}, "synth config");
  SynthConfig cfg;
  maybe(j, "healthy_count", cfg.healthy_count);
  maybe(j, "pd_count", cfg.pd_count);
  if (j.contains("healthy")) cfg.healthy = class_params_from_json(j.at("healthy"), cfg.healthy, "synth config healthy");
  if (j.contains("pd")) cfg.pd = class_params_from_json(j.at("pd"), cfg.pd, "synth config pd");
  maybe(j, "contamination", cfg.contamination);
  maybe(j, "fps", cfg.fps);
  maybe(j, "duration_s", cfg.duration_s);
  maybe(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

json synth_config_to_json(const SynthConfig& cfg) {
  return json{{"healthy_count", cfg.healthy_count},
              {"pd_count", cfg.pd_count},
              {"healthy", class_params_to_json(cfg.healthy)},
              {"pd", class_params_to_json(cfg.pd)},
              {"contamination", cfg.contamination},
              {"fps", cfg.fps},
              {"duration_s", cfg.duration_s},
              {"seed", cfg.seed}};
}

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"input_channels", cfg.input_channels},
              {"frames", cfg.frames},
              {"vertices", cfg.vertices},
              {"subset_count", cfg.subset_count},
              {"temporal_kernel", cfg.temporal_kernel},
              {"channels", cfg.channels},
              {"dropout", cfg.dropout},
              {"adaptive", cfg.adaptive},
              {"embed_channels", cfg.embed_channels}};
}

ModelConfig model_config_from_json(const json& j) {
  check_keys(j,
             {"input_channels", "frames", "vertices", "subset_count", "temporal_kernel", "channels", "dropout",
              "adaptive", "embed_channels"},
             "model config");
  ModelConfig cfg;
  maybe(j, "input_channels", cfg.input_channels);
  maybe(j, "frames", cfg.frames);
  maybe(j, "vertices", cfg.vertices);
  maybe(j, "subset_count", cfg.subset_count);
  maybe(j, "temporal_kernel", cfg.temporal_kernel);
  maybe(j, "channels", cfg.channels);
  maybe(j, "dropout", cfg.dropout);
  maybe(j, "adaptive", cfg.adaptive);
  maybe(j, "embed_channels", cfg.embed_channels);
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"lr", cfg.lr},
              {"plateau_factor", cfg.plateau_factor},
              {"plateau_patience", cfg.plateau_patience},
              {"max_epochs", cfg.max_epochs},
              {"risk", json{{"base_loss", to_string(cfg.risk.base_loss)}, {"theta_p", cfg.risk.theta_p}, {"mode", to_string(cfg.risk.mode)}}},
              {"stream", to_string(cfg.stream)},
              {"seed", cfg.seed},
              {"precision", cfg.precision}};
}

TrainConfig train_config_from_json(const json& j) {
  check_keys(j, {"batch_size", "lr", "plateau_factor", "plateau_patience", "max_epochs", "risk", "stream", "seed", "precision"},
             "train config");
  TrainConfig cfg;
  maybe(j, "batch_size", cfg.batch_size);
  maybe(j, "lr", cfg.lr);
  maybe(j, "plateau_factor", cfg.plateau_factor);
  maybe(j, "plateau_patience", cfg.plateau_patience);
  maybe(j, "max_epochs", cfg.max_epochs);
  if (j.contains("risk")) {
    const json& r = j.at("risk");
    check_keys(r, {"base_loss", "theta_p", "mode"}, "risk config");
    if (r.contains("base_loss")) cfg.risk.base_loss = base_loss_from_string(r.at("base_loss").get<std::string>());
    maybe(r, "theta_p", cfg.risk.theta_p);
    if (r.contains("mode")) cfg.risk.mode = risk_mode_from_string(r.at("mode").get<std::string>());
  }
  if (j.contains("stream")) cfg.stream = stream_from_string(j.at("stream").get<std::string>());
  maybe(j, "seed", cfg.seed);
  maybe(j, "precision", cfg.precision);
  cfg.validate();
  return cfg;
}

}  // namespace pulsar
