#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "vsod/core_types.hpp"
#include "vsod/layers.hpp"

namespace vsod {

struct GC3DConfig {
  int k = 7;
  int in_channels = 256;
  int out_channels = 256;
  /// Adds x + conv(relu(conv(x))) with 1x3x3 kernels after the branch sum.
  bool boundary_refinement = false;

  void validate() const;
};

/// 3D global convolution: two parallel branches of factorized spatial
/// convolutions, (1xkx1 then 1x1xk) and (1x1xk then 1xkx1), summed. Every
/// kernel has temporal extent 1, so outputs never mix frames. The mid width
/// of both branches equals out_channels.
class GC3D {
 public:
  GC3D() = default;
  explicit GC3D(const GC3DConfig& config);

  const GC3DConfig& config() const noexcept { return config_; }
  void initialize(std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tensor& grad_out, Tape& tape);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  GC3DConfig config_;
  Conv3d col_a_, row_a_;  // branch A: (k x 1) then (1 x k)
  Conv3d row_b_, col_b_;  // branch B: (1 x k) then (k x 1)
  std::optional<Conv3d> refine1_, refine2_;
};

/// 2k * mid * (in + out) with mid = out; equals 4 k C^2 when in == out.
std::size_t gc3d_parameter_count(const GC3DConfig& config);

Tensor gc3d_forward(const GC3D& module, const Tensor& x);

enum class BridgeKind { GC3D, C3D };
enum class RefineKind { RF3D, Upsample };
enum class HeadKind { Sigmoid, Softmax2 };

std::string to_string(BridgeKind kind);
std::string to_string(RefineKind kind);
std::string to_string(HeadKind kind);
BridgeKind parse_bridge_kind(const std::string& text);
RefineKind parse_refine_kind(const std::string& text);
HeadKind parse_head_kind(const std::string& text);

struct DecoderConfig {
  BridgeKind bridge = BridgeKind::GC3D;
  RefineKind refine = RefineKind::RF3D;
  /// Width after the bridge followed by the output width of each of the
  /// three refinement steps.
  std::vector<int> channels{256, 128, 64, 32};
  int gc_kernel = 7;
  bool gc_boundary_refinement = false;
  int final_upsample_factor = 4;
  HeadKind head = HeadKind::Sigmoid;

  void validate() const;
  int head_channels() const { return head == HeadKind::Sigmoid ? 1 : 2; }

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

/// Bridge applied to the stride-32 level: either GC3D or one padded 3x3x3
/// convolution (the C3D baseline).
class Bridge {
 public:
  Bridge() = default;
  Bridge(BridgeKind kind, int in_channels, int out_channels, int gc_kernel, bool boundary_refinement);

  BridgeKind kind() const noexcept { return kind_; }
  GC3D& gc3d() { return std::get<GC3D>(impl_); }
  const GC3D& gc3d() const { return std::get<GC3D>(impl_); }
  Conv3d& c3d() { return std::get<Conv3d>(impl_); }

  void initialize(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tensor& grad_out, Tape& tape);
  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  BridgeKind kind_ = BridgeKind::GC3D;
  std::variant<GC3D, Conv3d> impl_;
};

Tensor bridge_forward(const Bridge& bridge, const Tensor& deepest_level);

/// Upsample factor per axis taking `coarse` to `fine` under ceil-division
/// strides; throws ShapeError when `fine` is not reachable from `coarse`.
Dim3 check_upsample_ratio(Dim3 coarse, Dim3 fine, Dim3 factor);

/// 3D refinement module:
///   out = R2(upsample(R1(x)) + adapt(skip))
/// where R(y) = y + conv3(relu(conv3(y))) (with normalization after each
/// convolution). `adapt` is a 1x1x1 convolution from the skip width to the
/// decoder width. R2 changes width to out_channels, using a 1x1x1
/// projection on its skip path when widths differ.
class RF3D {
 public:
  RF3D() = default;
  RF3D(int in_channels, int skip_channels, int out_channels);

  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return out_channels_; }
  void initialize(std::mt19937_64& rng);

  /// `factor` is the (temporal, spatial, spatial) ratio between the two
  /// levels; the upsampled map is cropped to the skip's extent.
  Tensor forward(const Tensor& x, const Tensor& skip, Dim3 factor, Tape* tape = nullptr) const;
  /// Returns {grad_x, grad_skip}.
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out, Dim3 factor, Tape& tape);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

  Conv3d& adapter() { return adapter_; }

 private:
  int in_channels_ = 0;
  int skip_channels_ = 0;
  int out_channels_ = 0;
  Conv3d r1a_, r1b_, r2a_, r2b_;
  ChannelNorm n1a_, n1b_, n2a_, n2b_;
  Conv3d adapter_;
  std::optional<Conv3d> r2_projection_;
};

Tensor rf3d_forward(const RF3D& module, const Tensor& x, const Tensor& skip, Dim3 factor);

/// Baseline refinement: two 3x3x3 convolutions, trilinear upsampling to the
/// skip's grid, concatenation with the encoder feature and a 1x1x1 fusion.
class UpsampleRefine {
 public:
  UpsampleRefine() = default;
  UpsampleRefine(int in_channels, int skip_channels, int out_channels);

  void initialize(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const Tensor& skip, Dim3 factor, Tape* tape = nullptr) const;
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out, Dim3 factor, Tape& tape);
  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  int in_channels_ = 0;
  int skip_channels_ = 0;
  Conv3d c1_, c2_, fuse_;
  ChannelNorm n1_, n2_, nf_;
};

/// Refinement step that dispatches on RefineKind.
class RefineStep {
 public:
  RefineStep() = default;
  RefineStep(RefineKind kind, int in_channels, int skip_channels, int out_channels);

  void initialize(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const Tensor& skip, Dim3 factor, Tape* tape = nullptr) const;
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out, Dim3 factor, Tape& tape);
  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

  RF3D& rf3d() { return std::get<RF3D>(impl_); }

 private:
  std::variant<RF3D, UpsampleRefine> impl_;
};

/// Turns the four pyramid levels into head logits at input resolution:
/// bridge on level 4, refinement consuming levels 3, 2, 1, a 3x3x3 head
/// convolution and trilinear upsampling to the clip extent.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& config, const std::array<int, 4>& level_channels);

  const DecoderConfig& config() const noexcept { return config_; }
  void initialize(std::mt19937_64& rng);

  /// Returns (head_channels, T, H, W) logits for a clip of `clip_extent`.
  Tensor forward(const std::array<Tensor, 4>& levels, const std::array<int, 4>& temporal_strides,
                 Dim3 clip_extent, Tape* tape = nullptr) const;
  std::array<Tensor, 4> backward(const Tensor& grad_logits, Tape& tape);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

  Bridge& bridge() { return bridge_; }
  RefineStep& refine(std::size_t i) { return refine_.at(i); }
  Conv3d& head() { return head_; }

 private:
  struct Factors {
    std::array<Dim3, 3> refine;
    Dim3 final_factor;
  };
  Factors factors(const std::array<int, 4>& temporal_strides) const;

  DecoderConfig config_;
  std::array<int, 4> level_channels_{};
  Bridge bridge_;
  std::array<RefineStep, 3> refine_;
  Conv3d head_;
};

/// Foreground logits (1, T, H, W) from head logits: identity for the
/// sigmoid head, l1 - l0 for the two-class head.
Tensor foreground_logits(const Tensor& head_logits);

Tensor decode(const Decoder& decoder, const FeaturePyramid& pyramid, Dim3 clip_extent);

/// One stage of a layer chain for receptive-field analysis.
struct LayerExtent {
  Dim3 kernel{1, 1, 1};
  Dim3 stride{1, 1, 1};
  Dim3 upsample{1, 1, 1};  // trilinear, half-pixel centers

  static LayerExtent conv(Dim3 kernel, Dim3 stride = {1, 1, 1}) { return {kernel, stride, {1, 1, 1}}; }
  static LayerExtent upsampling(Dim3 factor) { return {{1, 1, 1}, {1, 1, 1}, factor}; }
};

/// Extent of input positions that can influence one output element of the
/// chain (ordered input to output), composed from the output backwards. A
/// convolution maps r to (r - 1) * stride + kernel; an upsampling by u > 1
/// maps r to ceil((r - 1) / u) + 2, the worst case over alignments.
Dim3 effective_receptive_field(const std::vector<LayerExtent>& chain);

/// Layer chains of the modules used in the default network.
std::vector<LayerExtent> gc3d_chain(int k);
std::vector<LayerExtent> c3d_chain();

}  // namespace vsod
