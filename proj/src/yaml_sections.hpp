#pragma once

#include <initializer_list>
#include <string>
#include <yaml-cpp/yaml.h>

#include "vsod/config.hpp"

namespace vsod::yaml_sections {

/// Throws ConfigError unless `node` is a map whose keys are all in `allowed`.
void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed);

/// Reads `key` into `out` when present; ConfigError naming the key on a
/// type mismatch. Returns whether the key was present.
template <class T>
bool read(const YAML::Node& node, const std::string& path, const char* key, T& out);

void emit_network(YAML::Emitter& out, const NetworkConfig& config);
void emit_train(YAML::Emitter& out, const TrainConfig& config);

NetworkConfig read_network(const YAML::Node& node, const std::string& path);

struct TrainPresence {
  bool clip_length = false;
  bool loss = false;
};
TrainConfig read_train(const YAML::Node& node, const std::string& path, TrainPresence* presence = nullptr);

YAML::Node load(const std::string& text, const std::string& what);

}  // namespace vsod::yaml_sections
