#pragma once

#include <string>

#include <json.hpp>

#include "pulsar/synth.hpp"

namespace pulsar {

// Config files are JSON or a flat TOML subset ([section] headers, dotted
// keys, strings, numbers, booleans, simple arrays). Both parse into one JSON
// object model.
nlohmann::json load_config_file(const std::string& path);
nlohmann::json toml_subset_to_json(const std::string& text);

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

}  // namespace pulsar
