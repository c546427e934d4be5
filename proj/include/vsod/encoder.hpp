#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "vsod/core_types.hpp"
#include "vsod/layers.hpp"

namespace vsod {

struct BottleneckSpec {
  int in_channels = 64;
  int mid_channels = 64;
  int out_channels = 256;
  int spatial_stride = 1;
  int temporal_stride = 1;
  bool channel_separated = true;

  void validate() const;
};

/// Closed-form parameter count of one bottleneck. With `include_norm`, adds
/// the two affine scalars per channel of every normalization layer.
std::size_t bottleneck_parameter_count(const BottleneckSpec& spec, bool include_norm);

/// Residual block 1x1x1 -> 3x3x3 -> 1x1x1. In the channel-separated variant
/// the 3x3x3 convolution is depthwise, so channels only mix in the 1x1x1
/// convolutions.
class Bottleneck {
 public:
  Bottleneck() = default;
  explicit Bottleneck(const BottleneckSpec& spec);

  const BottleneckSpec& spec() const noexcept { return spec_; }
  bool has_projection() const noexcept { return projection_.has_value(); }

  void initialize(std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tensor& grad_out, Tape& tape);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  BottleneckSpec spec_;
  Conv3d reduce_;
  ChannelNorm reduce_norm_;
  Conv3d spatiotemporal_;
  ChannelNorm spatiotemporal_norm_;
  Conv3d expand_;
  ChannelNorm expand_norm_;
  std::optional<Conv3d> projection_;
  std::optional<ChannelNorm> projection_norm_;
};

/// relu(residual(x) + expand(depthwise(reduce(x)))) for a block with the
/// given weights.
Tensor csn_bottleneck_forward(const Bottleneck& block, const Tensor& x);

struct EncoderConfig {
  std::vector<int> stage_depths{3, 8, 36, 3};
  int base_width = 64;
  std::vector<int> temporal_strides{1, 2, 2, 2};
  bool channel_separated = true;
  int stem_temporal_stride = 1;

  void validate() const;
  /// Output channels of stage i (expansion 4 over the stage's mid width).
  int stage_channels(std::size_t stage) const { return base_width * (1 << stage) * 4; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// 3D ResNet encoder: stem (3x7x7 convolution and 1x3x3 max pooling, total
/// spatial stride 4) followed by four bottleneck stages emitting spatial
/// strides 4, 8, 16 and 32.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& config);

  const EncoderConfig& config() const noexcept { return config_; }

  void initialize(std::mt19937_64& rng);

  /// Cumulative temporal stride of each pyramid level.
  std::array<int, 4> level_temporal_strides() const;

  FeaturePyramid encode(const VideoTensor& clip) const;
  std::array<Tensor, 4> forward(const Tensor& clip, Tape* tape = nullptr) const;
  /// Backpropagates the gradients of all four levels. The clip gradient is
  /// not needed by training and is not computed.
  void backward(const std::array<Tensor, 4>& level_grads, Tape& tape);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  EncoderConfig config_;
  Conv3d stem_;
  ChannelNorm stem_norm_;
  MaxPool3d stem_pool_;
  std::vector<std::vector<Bottleneck>> stages_;
};

/// Validates the config, builds and randomly initializes an encoder.
Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed = 0);

}  // namespace vsod
