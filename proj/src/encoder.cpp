#include "vsod/encoder.hpp"

#include <fmt/format.h>

#include "vsod/errors.hpp"

namespace vsod {

void BottleneckSpec::validate() const {
  if (in_channels < 1 || mid_channels < 1 || out_channels < 1) throw ConfigError("bottleneck channels must be positive");
  if (mid_channels > out_channels) {
    throw ConfigError(fmt::format("bottleneck mid channels {} exceed out channels {}", mid_channels, out_channels));
  }
  if (spatial_stride != 1 && spatial_stride != 2) throw ConfigError("bottleneck spatial stride must be 1 or 2");
  if (temporal_stride != 1 && temporal_stride != 2) throw ConfigError("bottleneck temporal stride must be 1 or 2");
}

std::size_t bottleneck_parameter_count(const BottleneckSpec& s, bool include_norm) {
  const auto in = static_cast<std::size_t>(s.in_channels);
  const auto mid = static_cast<std::size_t>(s.mid_channels);
  const auto out = static_cast<std::size_t>(s.out_channels);
  std::size_t n = in * mid + (s.channel_separated ? 27 * mid : 27 * mid * mid) + mid * out;
  const bool projection = s.in_channels != s.out_channels || s.spatial_stride != 1 || s.temporal_stride != 1;
  if (projection) n += in * out;
  if (include_norm) {
    n += 2 * (mid + mid + out);
    if (projection) n += 2 * out;
  }
  return n;
}

Bottleneck::Bottleneck(const BottleneckSpec& spec) : spec_(spec) {
  spec.validate();
  const Dim3 stride{spec.temporal_stride, spec.spatial_stride, spec.spatial_stride};
  reduce_ = Conv3d({.in_channels = spec.in_channels, .out_channels = spec.mid_channels});
  reduce_norm_ = ChannelNorm(spec.mid_channels);
  spatiotemporal_ = Conv3d({.in_channels = spec.mid_channels,
                            .out_channels = spec.mid_channels,
                            .kernel = {3, 3, 3},
                            .stride = stride,
                            .padding = {1, 1, 1},
                            .depthwise = spec.channel_separated});
  spatiotemporal_norm_ = ChannelNorm(spec.mid_channels);
  expand_ = Conv3d({.in_channels = spec.mid_channels, .out_channels = spec.out_channels});
  expand_norm_ = ChannelNorm(spec.out_channels);
  if (spec.in_channels != spec.out_channels || stride != Dim3{1, 1, 1}) {
    projection_ = Conv3d({.in_channels = spec.in_channels, .out_channels = spec.out_channels, .stride = stride});
    projection_norm_ = ChannelNorm(spec.out_channels);
  }
}

void Bottleneck::initialize(std::mt19937_64& rng) {
  reduce_.initialize(rng);
  spatiotemporal_.initialize(rng);
  expand_.initialize(rng);
  if (projection_) projection_->initialize(rng);
}

Tensor Bottleneck::forward(const Tensor& x, Tape* tape) const {
  if (x.channels() != spec_.in_channels) {
    throw ShapeError(fmt::format("bottleneck expects {} channels, got {}", spec_.in_channels, x.channels()));
  }
  Tensor h = relu(reduce_norm_.forward(reduce_.forward(x, tape), tape), tape);
  h = relu(spatiotemporal_norm_.forward(spatiotemporal_.forward(h, tape), tape), tape);
  h = expand_norm_.forward(expand_.forward(h, tape), tape);
  if (projection_) {
    h += projection_norm_->forward(projection_->forward(x, tape), tape);
  } else {
    h += x;
  }
  return relu(h, tape);
}

Tensor Bottleneck::backward(const Tensor& grad_out, Tape& tape) {
  const Tensor g = relu_backward(grad_out, tape);
  Tensor gx = projection_ ? projection_->backward(projection_norm_->backward(g, tape), tape) : g;
  Tensor gh = expand_.backward(expand_norm_.backward(g, tape), tape);
  gh = relu_backward(gh, tape);
  gh = spatiotemporal_.backward(spatiotemporal_norm_.backward(gh, tape), tape);
  gh = relu_backward(gh, tape);
  gx += reduce_.backward(reduce_norm_.backward(gh, tape), tape);
  return gx;
}

void Bottleneck::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  reduce_.visit_parameters(join_path(prefix, "conv1"), fn);
  reduce_norm_.visit_parameters(join_path(prefix, "norm1"), fn);
  spatiotemporal_.visit_parameters(join_path(prefix, "conv2"), fn);
  spatiotemporal_norm_.visit_parameters(join_path(prefix, "norm2"), fn);
  expand_.visit_parameters(join_path(prefix, "conv3"), fn);
  expand_norm_.visit_parameters(join_path(prefix, "norm3"), fn);
  if (projection_) {
    projection_->visit_parameters(join_path(prefix, "downsample.conv"), fn);
    projection_norm_->visit_parameters(join_path(prefix, "downsample.norm"), fn);
  }
}

Tensor csn_bottleneck_forward(const Bottleneck& block, const Tensor& x) { return block.forward(x); }

void EncoderConfig::validate() const {
  if (stage_depths.size() != 4) {
    throw ConfigError(fmt::format("encoder.stage_depths needs 4 entries, got {}", stage_depths.size()));
  }
  for (int d : stage_depths) {
    if (d < 1) throw ConfigError("encoder.stage_depths entries must be >= 1");
  }
  if (temporal_strides.size() != 4) {
    throw ConfigError(fmt::format("encoder.temporal_strides needs 4 entries, got {}", temporal_strides.size()));
  }
  for (int s : temporal_strides) {
    if (s != 1 && s != 2) throw ConfigError("encoder.temporal_strides entries must be 1 or 2");
  }
  if (base_width < 1) throw ConfigError("encoder.base_width must be positive");
  if (stem_temporal_stride != 1 && stem_temporal_stride != 2) {
    throw ConfigError("encoder.stem_temporal_stride must be 1 or 2");
  }
}

Encoder::Encoder(const EncoderConfig& config) : config_(config) {
  config.validate();
  const int w = config.base_width;
  stem_ = Conv3d({.in_channels = 3,
                  .out_channels = w,
                  .kernel = {3, 7, 7},
                  .stride = {config.stem_temporal_stride, 2, 2},
                  .padding = {1, 3, 3}});
  stem_norm_ = ChannelNorm(w);
  stem_pool_ = MaxPool3d({1, 3, 3}, {1, 2, 2}, {0, 1, 1});
  int in = w;
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<Bottleneck> blocks;
    const int mid = w << s;
    const int out = config.stage_channels(s);
    for (int b = 0; b < config.stage_depths[s]; ++b) {
      BottleneckSpec spec{.in_channels = b == 0 ? in : out,
                          .mid_channels = mid,
                          .out_channels = out,
                          .spatial_stride = (b == 0 && s > 0) ? 2 : 1,
                          .temporal_stride = b == 0 ? config.temporal_strides[s] : 1,
                          .channel_separated = config.channel_separated};
      blocks.emplace_back(spec);
    }
    stages_.push_back(std::move(blocks));
    in = out;
  }
}

void Encoder::initialize(std::mt19937_64& rng) {
  stem_.initialize(rng);
  for (auto& stage : stages_) {
    for (auto& block : stage) block.initialize(rng);
  }
}

std::array<int, 4> Encoder::level_temporal_strides() const {
  std::array<int, 4> out{};
  int stride = config_.stem_temporal_stride;
  for (std::size_t s = 0; s < 4; ++s) {
    stride *= config_.temporal_strides[s];
    out[s] = stride;
  }
  return out;
}

std::array<Tensor, 4> Encoder::forward(const Tensor& clip, Tape* tape) const {
  if (clip.channels() != 3) throw ShapeError(fmt::format("encoder expects 3 channels, got {}", clip.channels()));
  if (clip.empty()) throw InvalidArgument("empty clip");
  Tensor h = stem_pool_.forward(relu(stem_norm_.forward(stem_.forward(clip, tape), tape), tape), tape);
  std::array<Tensor, 4> levels;
  for (std::size_t s = 0; s < 4; ++s) {
    for (const auto& block : stages_[s]) h = block.forward(h, tape);
    levels[s] = h;
  }
  return levels;
}

void Encoder::backward(const std::array<Tensor, 4>& level_grads, Tape& tape) {
  Tensor g;
  for (std::size_t s = 4; s-- > 0;) {
    if (g.empty()) {
      g = level_grads[s];
    } else if (!level_grads[s].empty()) {
      g += level_grads[s];
    }
    for (auto it = stages_[s].rbegin(); it != stages_[s].rend(); ++it) g = it->backward(g, tape);
  }
  g = stem_pool_.backward(g, tape);
  g = relu_backward(g, tape);
  stem_.backward(stem_norm_.backward(g, tape), tape, false);
}

FeaturePyramid Encoder::encode(const VideoTensor& clip) const {
  auto levels = forward(to_tensor(clip));
  const auto temporal = level_temporal_strides();
  std::array<FeatureLevel, 4> out;
  for (std::size_t s = 0; s < 4; ++s) {
    out[s] = FeatureLevel{std::move(levels[s]), 4 << s, temporal[s]};
  }
  FeaturePyramid pyramid(std::move(out));
  pyramid.check_against(clip.extent());
  return pyramid;
}

void Encoder::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  stem_.visit_parameters(join_path(prefix, "stem.conv"), fn);
  stem_norm_.visit_parameters(join_path(prefix, "stem.norm"), fn);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].visit_parameters(join_path(prefix, fmt::format("stage{}.block{}", s + 1, b)), fn);
    }
  }
}

Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed) {
  Encoder encoder(config);
  std::mt19937_64 rng(seed);
  encoder.initialize(rng);
  return encoder;
}

}  // namespace vsod
