#pragma once

#include <filesystem>
#include <string>

#include "vsod/network.hpp"
#include "vsod/train.hpp"

namespace vsod {

inline constexpr const char* kWeightsFile = "weights.bin";
inline constexpr const char* kManifestFile = "manifest.yaml";
inline constexpr const char* kOptimizerFile = "optimizer.bin";

/// Writes `dir` containing the weights archive (keyed by parameter path),
/// the manifest and, when given, the optimizer state. The directory is
/// assembled under a temporary name and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const SegmentationNetwork& model, CheckpointMeta meta,
                     const Adam* optimizer = nullptr);

CheckpointMeta read_manifest(const std::filesystem::path& dir);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  SegmentationNetwork model;
};

/// Rebuilds the network from the manifest and loads its weights. Throws
/// ConfigError when the manifest's fingerprint or any parameter shape does
/// not match the rebuilt architecture. Restores optimizer state into
/// `optimizer` when both are present.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, Adam* optimizer = nullptr);

}  // namespace vsod
