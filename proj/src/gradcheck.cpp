#include "vsod/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vsod/errors.hpp"

namespace vsod {

Tensor RF3DOp::forward(const std::vector<Tensor>& inputs, Tape* tape) {
  if (inputs.size() != 2) throw InvalidArgument("RF3D takes (x, skip)");
  return m_.forward(inputs[0], inputs[1], factor_, tape);
}

std::vector<Tensor> RF3DOp::backward(const Tensor& g, Tape& tape) {
  auto [gx, gs] = m_.backward(g, factor_, tape);
  return {std::move(gx), std::move(gs)};
}

namespace {

Tensor random_like(const Tensor& t, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor r(t.channels(), t.extent());
  for (double& v : r.values()) v = n(rng);
  return r;
}

std::vector<Parameter*> trainable(DifferentiableOp& op) {
  std::vector<Parameter*> out;
  op.visit_parameters("", [&](const std::string&, Parameter& p) {
    if (p.trainable) out.push_back(&p);
  });
  return out;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-300});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace

GradcheckResult finite_difference_gradcheck(DifferentiableOp& op, const std::vector<Tensor>& inputs, double eps,
                                            const GradcheckOptions& options) {
  if (!(eps > 0.0)) throw InvalidArgument("gradcheck eps must be positive");
  std::mt19937_64 rng(options.seed);
  const std::vector<Parameter*> params = trainable(op);

  const Tensor probe = op.forward(inputs, nullptr);
  const Tensor w = random_like(probe, rng);
  auto objective = [&](const std::vector<Tensor>& x) { return dot(w, op.forward(x, nullptr)); };

  // Analytic gradients of <w, op(x)>.
  for (Parameter* p : params) p->zero_grad();
  Tape tape;
  op.forward(inputs, &tape);
  const std::vector<Tensor> input_grads = op.backward(w, tape);
  if (input_grads.size() != inputs.size()) throw InvalidArgument("op returned the wrong number of input gradients");
  std::vector<std::vector<double>> param_grads;
  for (Parameter* p : params) param_grads.push_back(p->grad);

  GradcheckResult result;
  for (int d = 0; d < options.directions; ++d) {
    std::vector<Tensor> v;
    double analytic = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      v.push_back(random_like(inputs[i], rng));
      analytic += dot(input_grads[i], v.back());
    }
    std::vector<Tensor> plus = inputs, minus = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor step = v[i];
      step *= eps;
      plus[i] += step;
      step *= -1.0;
      minus[i] += step;
    }
    const double numeric = (objective(plus) - objective(minus)) / (2.0 * eps);
    result.input_error = std::max(result.input_error, relative_error(analytic, numeric));
  }

  if (options.include_parameters && !params.empty()) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (int d = 0; d < options.directions; ++d) {
      std::vector<std::vector<double>> v(params.size());
      double analytic = 0.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        v[k].resize(params[k]->size());
        for (std::size_t i = 0; i < v[k].size(); ++i) {
          v[k][i] = n(rng);
          analytic += param_grads[k][i] * v[k][i];
        }
      }
      auto shift = [&](double s) {
        for (std::size_t k = 0; k < params.size(); ++k) {
          for (std::size_t i = 0; i < v[k].size(); ++i) params[k]->value[i] += s * v[k][i];
        }
      };
      const std::vector<std::vector<double>> saved = [&] {
        std::vector<std::vector<double>> s;
        for (Parameter* p : params) s.push_back(p->value);
        return s;
      }();
      shift(eps);
      const double up = objective(inputs);
      for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = saved[k];
      shift(-eps);
      const double down = objective(inputs);
      for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = saved[k];
      result.parameter_error = std::max(result.parameter_error, relative_error(analytic, (up - down) / (2.0 * eps)));
    }
  }
  result.max_relative_error = std::max(result.input_error, result.parameter_error);
  return result;
}

}  // namespace vsod
