#include "vsod/network.hpp"

#include <fmt/format.h>

#include "vsod/errors.hpp"

namespace vsod {

void NetworkConfig::validate() const {
  encoder.validate();
  decoder.validate();
  for (double s : normalization.std) {
    if (!(s > 0.0)) throw ConfigError("model.normalization.std entries must be positive");
  }
}

namespace {

std::array<int, 4> level_channels(const EncoderConfig& config) {
  return {config.stage_channels(0), config.stage_channels(1), config.stage_channels(2), config.stage_channels(3)};
}

}  // namespace

SegmentationNetwork::SegmentationNetwork(const NetworkConfig& config)
    : config_(config), encoder_(config.encoder), decoder_(config.decoder, level_channels(config.encoder)) {
  config.validate();
}

SegmentationNetwork SegmentationNetwork::build(const NetworkConfig& config, std::uint64_t seed) {
  SegmentationNetwork net(config);
  std::mt19937_64 rng(seed);
  net.initialize(rng);
  return net;
}

void SegmentationNetwork::initialize(std::mt19937_64& rng) {
  encoder_.initialize(rng);
  decoder_.initialize(rng);
}

Tensor SegmentationNetwork::forward(const Tensor& clip, Tape* tape) const {
  const auto levels = encoder_.forward(clip, tape);
  return decoder_.forward(levels, encoder_.level_temporal_strides(), clip.extent(), tape);
}

void SegmentationNetwork::backward(const Tensor& grad_head_logits, Tape& tape) {
  encoder_.backward(decoder_.backward(grad_head_logits, tape), tape);
}

Tensor SegmentationNetwork::foreground_logits(const VideoTensor& clip) const {
  return vsod::foreground_logits(forward(to_tensor(clip)));
}

void SegmentationNetwork::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  encoder_.visit_parameters(join_path(prefix, "encoder"), fn);
  decoder_.visit_parameters(join_path(prefix, "decoder"), fn);
}

std::string SegmentationNetwork::architecture_fingerprint() const {
  // FNV-1a over "path:d0xd1x...;" records.
  std::uint64_t hash = 14695981039346656037ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char ch : s) {
      hash ^= ch;
      hash *= 1099511628211ULL;
    }
  };
  for_each_parameter(*this, [&](const std::string& path, const Parameter& p) {
    std::string rec = path + ":";
    for (int d : p.shape) rec += fmt::format("{}x", d);
    mix(rec + ";");
  });
  return fmt::format("{:016x}", hash);
}

std::size_t estimate_inference_bytes(const NetworkConfig& config, Dim3 clip) {
  auto ceil_div = [](int a, int b) { return static_cast<std::size_t>((a + b - 1) / b); };
  std::size_t peak = 0;
  std::size_t pyramid = 0;
  int ts = config.encoder.stem_temporal_stride;
  // Stem output before pooling.
  const std::size_t stem = static_cast<std::size_t>(config.encoder.base_width) * ceil_div(clip.t, ts) *
                           ceil_div(clip.h, 2) * ceil_div(clip.w, 2);
  peak = std::max(peak, 2 * stem);
  for (std::size_t s = 0; s < 4; ++s) {
    ts *= config.encoder.temporal_strides[s];
    const std::size_t spatial = ceil_div(clip.h, 4 << s) * ceil_div(clip.w, 4 << s);
    const std::size_t volume = ceil_div(clip.t, ts) * spatial;
    const std::size_t out = static_cast<std::size_t>(config.encoder.stage_channels(s)) * volume;
    pyramid += out;
    // A block holds its input, output and the mid-width intermediates.
    peak = std::max(peak, pyramid + 2 * out);
  }
  const std::size_t full = clip.volume() * static_cast<std::size_t>(config.decoder.head_channels() + 3);
  peak = std::max(peak, pyramid + full);
  return peak * sizeof(double);
}

}  // namespace vsod
