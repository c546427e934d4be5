#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vsod/core_types.hpp"
#include "vsod/network.hpp"
#include "vsod/train.hpp"

namespace vsod::test {

inline std::filesystem::path fixture_dir() { return VSOD_FIXTURE_DIR; }
inline std::string cli_path() { return VSOD_CLI_PATH; }

/// Stage depths [1,1,1,1], width 8, narrow decoder.
inline NetworkConfig tiny_network(std::vector<int> decoder_channels = {16, 16, 8, 8}) {
  NetworkConfig cfg;
  cfg.encoder.stage_depths = {1, 1, 1, 1};
  cfg.encoder.base_width = 8;
  cfg.decoder.channels = std::move(decoder_channels);
  return cfg;
}

inline Tensor random_tensor(int channels, Dim3 extent, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(channels, extent);
  for (double& v : t.values()) v = n(rng);
  return t;
}

inline VideoTensor random_clip(int frames, int height, int width, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> data(static_cast<std::size_t>(frames) * height * width * 3);
  for (double& v : data) v = n(rng);
  return VideoTensor(frames, height, width, std::move(data));
}

inline BinaryMask random_mask(int height, int width, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  BinaryMask m(height, width);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  return m;
}

inline BinaryMask rect_mask(int height, int width, int y0, int x0, int y1, int x1) {
  BinaryMask m(height, width);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

/// Bounding box of the output positions that change when input element
/// (0, t, h, w) is perturbed.
Dim3 output_footprint(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, int t, int h, int w);

/// Largest bounding box, over output positions, of the input positions that
/// influence that output. Every input element is perturbed in turn.
Dim3 max_receptive_extent(const std::function<Tensor(const Tensor&)>& f, const Tensor& x);

/// Two synthetic 32x32 clips of 8 frames: a bright noisy disk on a darker
/// noisy background, moved by the default synthesis transforms.
std::vector<TrainingClip> overfit_clips();

/// lr 3e-4, no decay, 20 epochs of 10 iterations, batch 2, 8-frame clips.
TrainConfig overfit_train_config();

/// Mean region Jaccard over every frame of every clip, thresholding logits at 0.
double mean_jaccard(const SegmentationNetwork& model, const std::vector<TrainingClip>& clips);

/// Runs a shell command and returns its exit status.
int run_command(const std::string& command);

/// Whole file as a string.
std::string read_file(const std::filesystem::path& path);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace vsod::test
