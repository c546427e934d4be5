#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "vsod/network.hpp"
#include "vsod/pipeline.hpp"
#include "vsod/synth.hpp"
#include "vsod/train.hpp"

namespace vsod {

enum class LayoutKind { Davis, Sparse, ImageInstances };

std::string to_string(LayoutKind kind);
LayoutKind parse_layout_kind(const std::string& text);

struct DatasetSpec {
  std::filesystem::path root;
  LayoutKind layout = LayoutKind::Davis;
  /// Sequence-list file relative to the root; empty means every sequence.
  std::string split;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct DataConfig {
  std::optional<DatasetSpec> images;  // image-instances layout, image stage
  std::optional<DatasetSpec> video;   // davis or sparse layout, video stage

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  NetworkConfig model;
  ClipScheduleConfig schedule;
  TrainConfig train;
  TransformSpec synth;
  DataConfig data;

  /// Cross-field checks on top of each section's own validation.
  void validate() const;
  /// Synthesis settings for the image stage (clip length from train).
  SynthConfig synth_config() const { return {train.clip_length, synth}; }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses a YAML run configuration. Missing keys take their defaults;
/// unknown keys, malformed values and inconsistent sections throw
/// ConfigError naming the key path. Relative dataset roots are resolved
/// against `base_dir`.
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});

/// As parse_config_text, reading `path` (IoError if it does not exist).
RunConfig parse_config(const std::filesystem::path& path);

/// Every field written explicitly, so the output reparses to an equal config.
std::string serialize_config(const RunConfig& config);

/// YAML text for the model section alone and its inverse; used by the
/// checkpoint manifest.
std::string serialize_network_config(const NetworkConfig& config);
NetworkConfig parse_network_config(const std::string& text);

}  // namespace vsod
