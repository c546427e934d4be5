#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vsod/decoder.hpp"
#include "vsod/layers.hpp"

namespace vsod {

/// A differentiable operation over one or more input tensors, with
/// optional trainable parameters.
class DifferentiableOp {
 public:
  virtual ~DifferentiableOp() = default;
  virtual Tensor forward(const std::vector<Tensor>& inputs, Tape* tape) = 0;
  /// Accumulates parameter gradients and returns one gradient per input.
  virtual std::vector<Tensor> backward(const Tensor& grad_out, Tape& tape) = 0;
  virtual void visit_parameters(const std::string& /*prefix*/, const ParameterVisitor& /*fn*/) {}
};

/// Adapts any module with forward(x, tape) / backward(g, tape) /
/// visit_parameters to a single-input DifferentiableOp.
template <class Module>
class ModuleOp : public DifferentiableOp {
 public:
  explicit ModuleOp(Module& m) : m_(m) {}
  Tensor forward(const std::vector<Tensor>& inputs, Tape* tape) override { return m_.forward(inputs.at(0), tape); }
  std::vector<Tensor> backward(const Tensor& g, Tape& tape) override { return {m_.backward(g, tape)}; }
  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn) override {
    m_.visit_parameters(prefix, fn);
  }

 private:
  Module& m_;
};

/// RF3D as a two-input op (x, skip) at a fixed level ratio.
class RF3DOp : public DifferentiableOp {
 public:
  RF3DOp(RF3D& m, Dim3 factor) : m_(m), factor_(factor) {}
  Tensor forward(const std::vector<Tensor>& inputs, Tape* tape) override;
  std::vector<Tensor> backward(const Tensor& g, Tape& tape) override;
  void visit_parameters(const std::string& prefix, const ParameterVisitor& fn) override {
    m_.visit_parameters(prefix, fn);
  }

 private:
  RF3D& m_;
  Dim3 factor_;
};

struct GradcheckOptions {
  int directions = 4;
  std::uint64_t seed = 1;
  bool include_parameters = true;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  double input_error = 0.0;
  double parameter_error = 0.0;
};

/// Compares the analytic directional derivative of L = <w, op(x)> (w
/// random) against the central difference (L(x + eps v) - L(x - eps v)) /
/// 2 eps along random directions v, separately over the inputs and the
/// trainable parameters. Relative error is |a - n| / max(|a|, |n|).
GradcheckResult finite_difference_gradcheck(DifferentiableOp& op, const std::vector<Tensor>& inputs, double eps,
                                            const GradcheckOptions& options = {});

inline double finite_difference_gradcheck(DifferentiableOp& op, const Tensor& input, double eps) {
  return finite_difference_gradcheck(op, std::vector<Tensor>{input}, eps).max_relative_error;
}

}  // namespace vsod
