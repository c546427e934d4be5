#include "vsod/decoder.hpp"

#include <fmt/format.h>

#include "vsod/errors.hpp"

namespace vsod {

void GC3DConfig::validate() const {
  if (k < 1 || k % 2 == 0) throw ConfigError(fmt::format("GC3D kernel size must be odd and positive, got {}", k));
  if (in_channels < 1 || out_channels < 1) throw ConfigError("GC3D channels must be positive");
}

GC3D::GC3D(const GC3DConfig& config) : config_(config) {
  config.validate();
  const int k = config.k;
  const int in = config.in_channels;
  const int out = config.out_channels;
  const Dim3 column{1, k, 1};
  const Dim3 row{1, 1, k};
  auto conv = [](int cin, int cout, Dim3 kernel) {
    return Conv3d({.in_channels = cin, .out_channels = cout, .kernel = kernel, .padding = ConvSpec::same_padding(kernel)});
  };
  col_a_ = conv(in, out, column);
  row_a_ = conv(out, out, row);
  row_b_ = conv(in, out, row);
  col_b_ = conv(out, out, column);
  if (config.boundary_refinement) {
    refine1_ = conv(out, out, {1, 3, 3});
    refine2_ = conv(out, out, {1, 3, 3});
  }
}

void GC3D::initialize(std::mt19937_64& rng) {
  // Linear branches: unit gain keeps the summed output at the input scale.
  col_a_.initialize(rng, 1.0);
  row_a_.initialize(rng, 1.0);
  row_b_.initialize(rng, 1.0);
  col_b_.initialize(rng, 1.0);
  if (refine1_) {
    refine1_->initialize(rng);
    refine2_->initialize(rng);
  }
}

Tensor GC3D::forward(const Tensor& x, Tape* tape) const {
  if (x.channels() != config_.in_channels) {
    throw ShapeError(fmt::format("GC3D expects {} channels, got {}", config_.in_channels, x.channels()));
  }
  Tensor out = row_a_.forward(col_a_.forward(x, tape), tape);
  out += col_b_.forward(row_b_.forward(x, tape), tape);
  if (refine1_) out += refine2_->forward(relu(refine1_->forward(out, tape), tape), tape);
  return out;
}

Tensor GC3D::backward(const Tensor& grad_out, Tape& tape) {
  Tensor g = grad_out;
  if (refine1_) g += refine1_->backward(relu_backward(refine2_->backward(grad_out, tape), tape), tape);
  Tensor gx = row_b_.backward(col_b_.backward(g, tape), tape);
  gx += col_a_.backward(row_a_.backward(g, tape), tape);
  return gx;
}

void GC3D::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  col_a_.visit_parameters(join_path(prefix, "branch_a.col"), fn);
  row_a_.visit_parameters(join_path(prefix, "branch_a.row"), fn);
  row_b_.visit_parameters(join_path(prefix, "branch_b.row"), fn);
  col_b_.visit_parameters(join_path(prefix, "branch_b.col"), fn);
  if (refine1_) {
    refine1_->visit_parameters(join_path(prefix, "boundary.conv1"), fn);
    refine2_->visit_parameters(join_path(prefix, "boundary.conv2"), fn);
  }
}

std::size_t gc3d_parameter_count(const GC3DConfig& c) {
  const auto k = static_cast<std::size_t>(c.k);
  const auto in = static_cast<std::size_t>(c.in_channels);
  const auto out = static_cast<std::size_t>(c.out_channels);
  std::size_t n = 2 * k * out * (in + out);
  if (c.boundary_refinement) n += 2 * 9 * out * out;
  return n;
}

Tensor gc3d_forward(const GC3D& module, const Tensor& x) { return module.forward(x); }

std::string to_string(BridgeKind kind) { return kind == BridgeKind::GC3D ? "gc3d" : "c3d"; }
std::string to_string(RefineKind kind) { return kind == RefineKind::RF3D ? "rf3d" : "upsample"; }
std::string to_string(HeadKind kind) { return kind == HeadKind::Sigmoid ? "sigmoid" : "softmax2"; }

BridgeKind parse_bridge_kind(const std::string& text) {
  if (text == "gc3d") return BridgeKind::GC3D;
  if (text == "c3d") return BridgeKind::C3D;
  throw ConfigError(fmt::format("unknown bridge variant '{}' (expected gc3d or c3d)", text));
}

RefineKind parse_refine_kind(const std::string& text) {
  if (text == "rf3d") return RefineKind::RF3D;
  if (text == "upsample") return RefineKind::Upsample;
  throw ConfigError(fmt::format("unknown refine variant '{}' (expected rf3d or upsample)", text));
}

HeadKind parse_head_kind(const std::string& text) {
  if (text == "sigmoid") return HeadKind::Sigmoid;
  if (text == "softmax2") return HeadKind::Softmax2;
  throw ConfigError(fmt::format("unknown head '{}' (expected sigmoid or softmax2)", text));
}

void DecoderConfig::validate() const {
  if (channels.size() != 4) throw ConfigError(fmt::format("decoder.channels needs 4 entries, got {}", channels.size()));
  for (int c : channels) {
    if (c < 1) throw ConfigError("decoder.channels entries must be positive");
  }
  if (gc_kernel < 1 || gc_kernel % 2 == 0) {
    throw ConfigError(fmt::format("decoder.gc_kernel must be odd and positive, got {}", gc_kernel));
  }
  if (final_upsample_factor != 4) {
    throw ConfigError("decoder.final_upsample_factor must equal the finest pyramid stride (4)");
  }
}

Bridge::Bridge(BridgeKind kind, int in_channels, int out_channels, int gc_kernel, bool boundary_refinement)
    : kind_(kind) {
  if (kind == BridgeKind::GC3D) {
    impl_ = GC3D(GC3DConfig{gc_kernel, in_channels, out_channels, boundary_refinement});
  } else {
    impl_ = Conv3d({.in_channels = in_channels, .out_channels = out_channels, .kernel = {3, 3, 3}, .padding = {1, 1, 1}});
  }
}

void Bridge::initialize(std::mt19937_64& rng) {
  if (kind_ == BridgeKind::GC3D) {
    gc3d().initialize(rng);
  } else {
    c3d().initialize(rng, 1.0);
  }
}

Tensor Bridge::forward(const Tensor& x, Tape* tape) const {
  return std::visit([&](const auto& m) { return m.forward(x, tape); }, impl_);
}

Tensor Bridge::backward(const Tensor& grad_out, Tape& tape) {
  return std::visit([&](auto& m) { return m.backward(grad_out, tape); }, impl_);
}

void Bridge::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  std::visit([&](auto& m) { m.visit_parameters(join_path(prefix, to_string(kind_)), fn); }, impl_);
}

Tensor bridge_forward(const Bridge& bridge, const Tensor& deepest_level) { return bridge.forward(deepest_level); }

Dim3 check_upsample_ratio(Dim3 coarse, Dim3 fine, Dim3 factor) {
  auto ok = [](int c, int f, int u) { return u >= 1 && (f + u - 1) / u == c; };
  if (!ok(coarse.t, fine.t, factor.t) || !ok(coarse.h, fine.h, factor.h) || !ok(coarse.w, fine.w, factor.w)) {
    throw ShapeError(fmt::format("extent {} is not an integer upsampling of {} by {}", to_string(fine),
                                 to_string(coarse), to_string(factor)));
  }
  return factor;
}

namespace {

Conv3d conv3(int cin, int cout) {
  return Conv3d({.in_channels = cin, .out_channels = cout, .kernel = {3, 3, 3}, .padding = {1, 1, 1}});
}

Conv3d conv1(int cin, int cout) { return Conv3d({.in_channels = cin, .out_channels = cout}); }

}  // namespace

RF3D::RF3D(int in_channels, int skip_channels, int out_channels)
    : in_channels_(in_channels), skip_channels_(skip_channels), out_channels_(out_channels) {
  if (in_channels < 1 || skip_channels < 1 || out_channels < 1) throw ConfigError("RF3D channels must be positive");
  r1a_ = conv3(in_channels, in_channels);
  r1b_ = conv3(in_channels, in_channels);
  r2a_ = conv3(in_channels, out_channels);
  r2b_ = conv3(out_channels, out_channels);
  n1a_ = ChannelNorm(in_channels);
  n1b_ = ChannelNorm(in_channels);
  n2a_ = ChannelNorm(out_channels);
  n2b_ = ChannelNorm(out_channels);
  adapter_ = conv1(skip_channels, in_channels);
  if (in_channels != out_channels) r2_projection_ = conv1(in_channels, out_channels);
}

void RF3D::initialize(std::mt19937_64& rng) {
  r1a_.initialize(rng);
  r1b_.initialize(rng, 1.0);
  r2a_.initialize(rng);
  r2b_.initialize(rng, 1.0);
  adapter_.initialize(rng, 1.0);
  if (r2_projection_) r2_projection_->initialize(rng, 1.0);
}

Tensor RF3D::forward(const Tensor& x, const Tensor& skip, Dim3 factor, Tape* tape) const {
  if (x.channels() != in_channels_) {
    throw ShapeError(fmt::format("RF3D expects {} decoder channels, got {}", in_channels_, x.channels()));
  }
  if (skip.channels() != skip_channels_) {
    throw ShapeError(fmt::format("RF3D expects {} skip channels, got {}", skip_channels_, skip.channels()));
  }
  check_upsample_ratio(x.extent(), skip.extent(), factor);

  Tensor r1 = n1b_.forward(r1b_.forward(relu(n1a_.forward(r1a_.forward(x, tape), tape), tape), tape), tape);
  r1 += x;
  Tensor y = upsample_trilinear(r1, factor, skip.extent(), tape);
  y += adapter_.forward(skip, tape);
  Tensor out = n2b_.forward(r2b_.forward(relu(n2a_.forward(r2a_.forward(y, tape), tape), tape), tape), tape);
  out += r2_projection_ ? r2_projection_->forward(y, tape) : y;
  return out;
}

std::pair<Tensor, Tensor> RF3D::backward(const Tensor& grad_out, Dim3 factor, Tape& tape) {
  Tensor gy = r2_projection_ ? r2_projection_->backward(grad_out, tape) : grad_out;
  gy += r2a_.backward(n2a_.backward(relu_backward(r2b_.backward(n2b_.backward(grad_out, tape), tape), tape), tape), tape);
  Tensor gskip = adapter_.backward(gy, tape);
  Tensor gr1 = upsample_trilinear_backward(gy, factor, tape);
  Tensor gx = gr1;
  gx += r1a_.backward(n1a_.backward(relu_backward(r1b_.backward(n1b_.backward(gr1, tape), tape), tape), tape), tape);
  return {std::move(gx), std::move(gskip)};
}

void RF3D::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  r1a_.visit_parameters(join_path(prefix, "pre.conv1"), fn);
  n1a_.visit_parameters(join_path(prefix, "pre.norm1"), fn);
  r1b_.visit_parameters(join_path(prefix, "pre.conv2"), fn);
  n1b_.visit_parameters(join_path(prefix, "pre.norm2"), fn);
  adapter_.visit_parameters(join_path(prefix, "adapter"), fn);
  r2a_.visit_parameters(join_path(prefix, "post.conv1"), fn);
  n2a_.visit_parameters(join_path(prefix, "post.norm1"), fn);
  r2b_.visit_parameters(join_path(prefix, "post.conv2"), fn);
  n2b_.visit_parameters(join_path(prefix, "post.norm2"), fn);
  if (r2_projection_) r2_projection_->visit_parameters(join_path(prefix, "post.projection"), fn);
}

Tensor rf3d_forward(const RF3D& module, const Tensor& x, const Tensor& skip, Dim3 factor) {
  return module.forward(x, skip, factor);
}

UpsampleRefine::UpsampleRefine(int in_channels, int skip_channels, int out_channels)
    : in_channels_(in_channels), skip_channels_(skip_channels) {
  if (in_channels < 1 || skip_channels < 1 || out_channels < 1) throw ConfigError("refinement channels must be positive");
  c1_ = conv3(in_channels, in_channels);
  c2_ = conv3(in_channels, in_channels);
  fuse_ = conv1(in_channels + skip_channels, out_channels);
  n1_ = ChannelNorm(in_channels);
  n2_ = ChannelNorm(in_channels);
  nf_ = ChannelNorm(out_channels);
}

void UpsampleRefine::initialize(std::mt19937_64& rng) {
  c1_.initialize(rng);
  c2_.initialize(rng);
  fuse_.initialize(rng);
}

Tensor UpsampleRefine::forward(const Tensor& x, const Tensor& skip, Dim3 factor, Tape* tape) const {
  if (x.channels() != in_channels_ || skip.channels() != skip_channels_) {
    throw ShapeError(fmt::format("upsampling refinement expects ({}, {}) channels, got ({}, {})", in_channels_,
                                 skip_channels_, x.channels(), skip.channels()));
  }
  check_upsample_ratio(x.extent(), skip.extent(), factor);
  Tensor h = relu(n1_.forward(c1_.forward(x, tape), tape), tape);
  h = relu(n2_.forward(c2_.forward(h, tape), tape), tape);
  h = upsample_trilinear(h, factor, skip.extent(), tape);
  return relu(nf_.forward(fuse_.forward(concat_channels(h, skip), tape), tape), tape);
}

std::pair<Tensor, Tensor> UpsampleRefine::backward(const Tensor& grad_out, Dim3 factor, Tape& tape) {
  const Tensor gcat = fuse_.backward(nf_.backward(relu_backward(grad_out, tape), tape), tape);
  Tensor gskip = slice_channels(gcat, in_channels_, skip_channels_);
  Tensor g = upsample_trilinear_backward(slice_channels(gcat, 0, in_channels_), factor, tape);
  g = c2_.backward(n2_.backward(relu_backward(g, tape), tape), tape);
  g = c1_.backward(n1_.backward(relu_backward(g, tape), tape), tape);
  return {std::move(g), std::move(gskip)};
}

void UpsampleRefine::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  c1_.visit_parameters(join_path(prefix, "conv1"), fn);
  n1_.visit_parameters(join_path(prefix, "norm1"), fn);
  c2_.visit_parameters(join_path(prefix, "conv2"), fn);
  n2_.visit_parameters(join_path(prefix, "norm2"), fn);
  fuse_.visit_parameters(join_path(prefix, "fuse"), fn);
  nf_.visit_parameters(join_path(prefix, "fuse_norm"), fn);
}

RefineStep::RefineStep(RefineKind kind, int in_channels, int skip_channels, int out_channels) {
  if (kind == RefineKind::RF3D) {
    impl_ = RF3D(in_channels, skip_channels, out_channels);
  } else {
    impl_ = UpsampleRefine(in_channels, skip_channels, out_channels);
  }
}

void RefineStep::initialize(std::mt19937_64& rng) {
  std::visit([&](auto& m) { m.initialize(rng); }, impl_);
}

Tensor RefineStep::forward(const Tensor& x, const Tensor& skip, Dim3 factor, Tape* tape) const {
  return std::visit([&](const auto& m) { return m.forward(x, skip, factor, tape); }, impl_);
}

std::pair<Tensor, Tensor> RefineStep::backward(const Tensor& grad_out, Dim3 factor, Tape& tape) {
  return std::visit([&](auto& m) { return m.backward(grad_out, factor, tape); }, impl_);
}

void RefineStep::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  std::visit([&](auto& m) { m.visit_parameters(prefix, fn); }, impl_);
}

Decoder::Decoder(const DecoderConfig& config, const std::array<int, 4>& level_channels)
    : config_(config), level_channels_(level_channels) {
  config.validate();
  const auto& ch = config.channels;
  bridge_ = Bridge(config.bridge, level_channels[3], ch[0], config.gc_kernel, config.gc_boundary_refinement);
  for (std::size_t i = 0; i < 3; ++i) {
    refine_[i] = RefineStep(config.refine, ch[i], level_channels[2 - i], ch[i + 1]);
  }
  head_ = Conv3d({.in_channels = ch[3],
                  .out_channels = config.head_channels(),
                  .kernel = {3, 3, 3},
                  .padding = {1, 1, 1},
                  .bias = true});
}

void Decoder::initialize(std::mt19937_64& rng) {
  bridge_.initialize(rng);
  for (auto& r : refine_) r.initialize(rng);
  head_.initialize(rng, 1.0);
}

Decoder::Factors Decoder::factors(const std::array<int, 4>& ts) const {
  Factors f{};
  for (std::size_t i = 0; i < 3; ++i) {
    const int coarse = ts[3 - i];
    const int fine = ts[2 - i];
    if (fine < 1 || coarse % fine != 0) {
      throw ShapeError(fmt::format("temporal strides {} and {} are not integer multiples", coarse, fine));
    }
    f.refine[i] = {coarse / fine, 2, 2};
  }
  f.final_factor = {ts[0], config_.final_upsample_factor, config_.final_upsample_factor};
  return f;
}

Tensor Decoder::forward(const std::array<Tensor, 4>& levels, const std::array<int, 4>& temporal_strides,
                        Dim3 clip_extent, Tape* tape) const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (levels[i].channels() != level_channels_[i]) {
      throw ShapeError(fmt::format("pyramid level {} has {} channels, decoder expects {}", i, levels[i].channels(),
                                   level_channels_[i]));
    }
  }
  const Factors f = factors(temporal_strides);
  check_upsample_ratio(levels[0].extent(), clip_extent, f.final_factor);
  Tensor h = bridge_.forward(levels[3], tape);
  for (std::size_t i = 0; i < 3; ++i) h = refine_[i].forward(h, levels[2 - i], f.refine[i], tape);
  Tensor logits = upsample_trilinear(head_.forward(h, tape), f.final_factor, clip_extent, tape);
  if (tape) {
    for (const auto& d : f.refine) tape->save_extent(d);
    tape->save_extent(f.final_factor);
  }
  return logits;
}

std::array<Tensor, 4> Decoder::backward(const Tensor& grad_logits, Tape& tape) {
  Factors f{};
  f.final_factor = tape.restore_extent();
  for (std::size_t i = 3; i-- > 0;) f.refine[i] = tape.restore_extent();

  std::array<Tensor, 4> grads;
  Tensor g = head_.backward(upsample_trilinear_backward(grad_logits, f.final_factor, tape), tape);
  for (std::size_t i = 3; i-- > 0;) {
    auto [gx, gskip] = refine_[i].backward(g, f.refine[i], tape);
    grads[2 - i] = std::move(gskip);
    g = std::move(gx);
  }
  grads[3] = bridge_.backward(g, tape);
  return grads;
}

void Decoder::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  bridge_.visit_parameters(join_path(prefix, "bridge"), fn);
  for (std::size_t i = 0; i < 3; ++i) refine_[i].visit_parameters(join_path(prefix, fmt::format("refine{}", i + 1)), fn);
  head_.visit_parameters(join_path(prefix, "head"), fn);
}

Tensor foreground_logits(const Tensor& head_logits) {
  if (head_logits.channels() == 1) return head_logits;
  if (head_logits.channels() != 2) {
    throw ShapeError(fmt::format("head logits must have 1 or 2 channels, got {}", head_logits.channels()));
  }
  Tensor out(1, head_logits.extent());
  const auto n = out.plane_size();
  const double* bg = head_logits.plane(0);
  const double* fg = head_logits.plane(1);
  double* o = out.plane(0);
  for (std::size_t i = 0; i < n; ++i) o[i] = fg[i] - bg[i];
  return out;
}

Tensor decode(const Decoder& decoder, const FeaturePyramid& pyramid, Dim3 clip_extent) {
  std::array<Tensor, 4> levels;
  std::array<int, 4> strides{};
  for (std::size_t i = 0; i < 4; ++i) {
    levels[i] = pyramid.level(i).features;
    strides[i] = pyramid.level(i).temporal_stride;
    if (pyramid.level(i).spatial_stride != (4 << i)) {
      throw ShapeError(fmt::format("pyramid level {} has spatial stride {}, expected {}", i,
                                   pyramid.level(i).spatial_stride, 4 << i));
    }
  }
  return decoder.forward(levels, strides, clip_extent);
}

Dim3 effective_receptive_field(const std::vector<LayerExtent>& chain) {
  auto step = [](int r, int k, int s, int u) {
    if (u > 1) return (r - 1 + u - 1) / u + 2;
    return (r - 1) * s + k;
  };
  Dim3 r{1, 1, 1};
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    r.t = step(r.t, it->kernel.t, it->stride.t, it->upsample.t);
    r.h = step(r.h, it->kernel.h, it->stride.h, it->upsample.h);
    r.w = step(r.w, it->kernel.w, it->stride.w, it->upsample.w);
  }
  return r;
}

std::vector<LayerExtent> gc3d_chain(int k) {
  return {LayerExtent::conv({1, k, 1}), LayerExtent::conv({1, 1, k})};
}

std::vector<LayerExtent> c3d_chain() { return {LayerExtent::conv({3, 3, 3})}; }

}  // namespace vsod
