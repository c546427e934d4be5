#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vsod/tensor.hpp"

namespace vsod {

/// A named block of scalars owned by a layer. Buffers (frozen statistics)
/// are parameters with `trainable == false`: they are checkpointed but never
/// optimized or counted.
struct Parameter {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  static Parameter filled(std::vector<int> shape, double fill, bool trainable = true);

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad();
};

using ParameterVisitor = std::function<void(const std::string& path, Parameter& param)>;

inline std::string join_path(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Activations saved during a training forward pass, consumed in reverse
/// order by the matching backward calls. Inference passes no tape and
/// leaves every layer untouched, so concurrent inference is safe.
class Tape {
 public:
  void save(Tensor t) { tensors_.push_back(std::move(t)); }
  Tensor restore();

  void save_indices(std::vector<std::uint32_t> idx) { indices_.push_back(std::move(idx)); }
  std::vector<std::uint32_t> restore_indices();

  void save_extent(Dim3 d) { extents_.push_back(d); }
  Dim3 restore_extent();

  bool empty() const noexcept { return tensors_.empty() && indices_.empty() && extents_.empty(); }

 private:
  std::vector<Tensor> tensors_;
  std::vector<std::vector<std::uint32_t>> indices_;
  std::vector<Dim3> extents_;
};

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  Dim3 kernel{1, 1, 1};
  Dim3 stride{1, 1, 1};
  Dim3 padding{0, 0, 0};
  bool depthwise = false;  // one filter per channel; requires in == out
  bool bias = false;

  /// Padding that preserves extent for stride 1 (kernel / 2 per axis).
  static Dim3 same_padding(Dim3 kernel) { return {kernel.t / 2, kernel.h / 2, kernel.w / 2}; }
};

Dim3 conv_output_extent(Dim3 in, Dim3 kernel, Dim3 stride, Dim3 padding);

/// 3D convolution, dense or depthwise, with zero padding.
///
/// Weights are stored [out][in_per_group][kt][kh][kw]; a depthwise
/// convolution has in_per_group == 1.
class Conv3d {
 public:
  Conv3d() = default;
  explicit Conv3d(const ConvSpec& spec);

  const ConvSpec& spec() const noexcept { return spec_; }
  Parameter& weight() noexcept { return weight_; }
  const Parameter& weight() const noexcept { return weight_; }
  Parameter& bias() noexcept { return bias_; }
  const Parameter& bias() const noexcept { return bias_; }

  Dim3 output_extent(Dim3 in) const { return conv_output_extent(in, spec_.kernel, spec_.stride, spec_.padding); }

  /// Fan-in scaled normal draws (He initialization); biases start at zero.
  void initialize(std::mt19937_64& rng, double gain = 2.0);

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  /// Accumulates weight/bias gradients; returns the input gradient unless
  /// `input_grad` is false (then an empty tensor).
  Tensor backward(const Tensor& grad_out, Tape& tape, bool input_grad = true);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  int in_per_group() const noexcept { return spec_.depthwise ? 1 : spec_.in_channels; }

  ConvSpec spec_;
  Parameter weight_;
  Parameter bias_;
};

/// Per-channel normalization with frozen statistics:
/// y = gamma * (x - running_mean) / sqrt(running_var + eps) + beta.
class ChannelNorm {
 public:
  ChannelNorm() = default;
  explicit ChannelNorm(int channels, double eps = 1e-5);

  int channels() const noexcept { return static_cast<int>(gamma_.size()); }
  Parameter& gamma() noexcept { return gamma_; }
  Parameter& beta() noexcept { return beta_; }

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tensor& grad_out, Tape& tape);

  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn);

 private:
  double inv_std(int c) const;

  double eps_ = 1e-5;
  Parameter gamma_;
  Parameter beta_;
  Parameter running_mean_;
  Parameter running_var_;
};

class MaxPool3d {
 public:
  MaxPool3d() = default;
  MaxPool3d(Dim3 kernel, Dim3 stride, Dim3 padding) : kernel_(kernel), stride_(stride), padding_(padding) {}

  Dim3 output_extent(Dim3 in) const { return conv_output_extent(in, kernel_, stride_, padding_); }

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tensor& grad_out, Tape& tape) const;

 private:
  Dim3 kernel_{1, 3, 3};
  Dim3 stride_{1, 2, 2};
  Dim3 padding_{0, 1, 1};
};

Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor relu_backward(const Tensor& grad_out, Tape& tape);

/// Trilinear upsampling by integer `factor` per axis with half-pixel
/// centers (align-corners = false), cropped to `target`. Each target extent
/// must not exceed factor * input extent.
Tensor upsample_trilinear(const Tensor& x, Dim3 factor, Dim3 target, Tape* tape = nullptr);
Tensor upsample_trilinear_backward(const Tensor& grad_out, Dim3 factor, Tape& tape);

/// Calls `fn` for every parameter of a const module. The visitor must not
/// modify the parameter.
template <class Module>
void for_each_parameter(const Module& module,
                        const std::function<void(const std::string&, const Parameter&)>& fn) {
  const_cast<Module&>(module).visit_parameters("", [&](const std::string& path, Parameter& p) { fn(path, p); });
}

/// Sum of all trainable scalars.
template <class Module>
std::size_t count_parameters(const Module& module) {
  std::size_t n = 0;
  for_each_parameter(module, [&](const std::string&, const Parameter& p) {
    if (p.trainable) n += p.size();
  });
  return n;
}

template <class Module>
void zero_grad(Module& module) {
  module.visit_parameters("", [](const std::string&, Parameter& p) { p.zero_grad(); });
}

}  // namespace vsod
