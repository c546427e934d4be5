#pragma once

#include <cstdint>
#include <string>

#include "vsod/core_types.hpp"
#include "vsod/decoder.hpp"
#include "vsod/encoder.hpp"

namespace vsod {

struct NetworkConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  ChannelNormalization normalization;

  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Encoder-decoder network mapping a normalized clip to per-pixel logits.
class SegmentationNetwork {
 public:
  SegmentationNetwork() = default;
  explicit SegmentationNetwork(const NetworkConfig& config);

  static SegmentationNetwork build(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return config_; }
  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  Decoder& decoder() noexcept { return decoder_; }
  const Decoder& decoder() const noexcept { return decoder_; }

  void initialize(std::mt19937_64& rng);

  /// Head logits (head_channels, T, H, W) for a (3, T, H, W) clip tensor.
  Tensor forward(const Tensor& clip, Tape* tape = nullptr) const;
  void backward(const Tensor& grad_head_logits, Tape& tape);

  /// Foreground logits (1, T, H, W).
  Tensor foreground_logits(const VideoTensor& clip) const;

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

  /// Stable digest of every parameter path and shape; two networks share a
  /// fingerprint exactly when their weight archives are interchangeable.
  std::string architecture_fingerprint() const;

 private:
  NetworkConfig config_;
  Encoder encoder_;
  Decoder decoder_;
};

/// Rough peak memory in bytes for one inference forward on `clip`.
std::size_t estimate_inference_bytes(const NetworkConfig& config, Dim3 clip);

}  // namespace vsod
