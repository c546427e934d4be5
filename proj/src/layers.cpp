#include "vsod/layers.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "vsod/errors.hpp"

namespace vsod {

Parameter Parameter::filled(std::vector<int> shape, double fill, bool trainable) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  Parameter p;
  p.shape = std::move(shape);
  p.value.assign(n, fill);
  p.grad.assign(trainable ? n : 0, 0.0);
  p.trainable = trainable;
  return p;
}

void Parameter::zero_grad() {
  if (trainable) grad.assign(value.size(), 0.0);
}

Tensor Tape::restore() {
  if (tensors_.empty()) throw Error("internal", "tape underflow (tensor)");
  Tensor t = std::move(tensors_.back());
  tensors_.pop_back();
  return t;
}

std::vector<std::uint32_t> Tape::restore_indices() {
  if (indices_.empty()) throw Error("internal", "tape underflow (indices)");
  auto idx = std::move(indices_.back());
  indices_.pop_back();
  return idx;
}

Dim3 Tape::restore_extent() {
  if (extents_.empty()) throw Error("internal", "tape underflow (extent)");
  Dim3 d = extents_.back();
  extents_.pop_back();
  return d;
}

Dim3 conv_output_extent(Dim3 in, Dim3 kernel, Dim3 stride, Dim3 padding) {
  auto one = [](int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; };
  return {one(in.t, kernel.t, stride.t, padding.t), one(in.h, kernel.h, stride.h, padding.h),
          one(in.w, kernel.w, stride.w, padding.w)};
}

namespace {

// Output indices o in [lo, hi] for which o * s - p + kk lands inside [0, n_in).
struct AxisRange {
  int lo = 0;
  int hi = -1;
};

std::vector<AxisRange> axis_ranges(int n_in, int n_out, int k, int s, int p) {
  std::vector<AxisRange> out(static_cast<std::size_t>(k));
  for (int kk = 0; kk < k; ++kk) {
    const int low_need = p - kk;
    const int lo = low_need <= 0 ? 0 : (low_need + s - 1) / s;
    const int high_lim = n_in - 1 + p - kk;
    const int hi = high_lim < 0 ? -1 : std::min(n_out - 1, high_lim / s);
    out[static_cast<std::size_t>(kk)] = {lo, hi};
  }
  return out;
}

struct ConvGeometry {
  Dim3 in;
  Dim3 out;
  Dim3 kernel;
  Dim3 stride;
  Dim3 padding;
  std::vector<AxisRange> rt, rh, rw;

  ConvGeometry(Dim3 in_, Dim3 out_, Dim3 k, Dim3 s, Dim3 p)
      : in(in_), out(out_), kernel(k), stride(s), padding(p),
        rt(axis_ranges(in.t, out.t, k.t, s.t, p.t)),
        rh(axis_ranges(in.h, out.h, k.h, s.h, p.h)),
        rw(axis_ranges(in.w, out.w, k.w, s.w, p.w)) {}

  bool pointwise() const {
    return kernel == Dim3{1, 1, 1} && stride == Dim3{1, 1, 1} && padding == Dim3{0, 0, 0};
  }

  // Calls fn(out_row_offset, in_row_offset) for each (ot, oh) row that tap
  // (kt, kh) touches.
  template <class Fn>
  void for_each_row(int kt, int kh, Fn&& fn) const {
    const auto& at = rt[static_cast<std::size_t>(kt)];
    const auto& ah = rh[static_cast<std::size_t>(kh)];
    for (int ot = at.lo; ot <= at.hi; ++ot) {
      const int it = ot * stride.t - padding.t + kt;
      for (int oh = ah.lo; oh <= ah.hi; ++oh) {
        const int ih = oh * stride.h - padding.h + kh;
        fn((static_cast<std::size_t>(ot) * out.h + oh) * out.w, (static_cast<std::size_t>(it) * in.h + ih) * in.w);
      }
    }
  }
};

}  // namespace

Conv3d::Conv3d(const ConvSpec& spec) : spec_(spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1) throw ConfigError("convolution channels must be positive");
  if (spec.kernel.t < 1 || spec.kernel.h < 1 || spec.kernel.w < 1) throw ConfigError("kernel extents must be positive");
  if (spec.stride.t < 1 || spec.stride.h < 1 || spec.stride.w < 1) throw ConfigError("strides must be positive");
  if (spec.depthwise && spec.in_channels != spec.out_channels) {
    throw ConfigError(fmt::format("depthwise convolution needs in == out channels, got {} and {}", spec.in_channels,
                                  spec.out_channels));
  }
  weight_ = Parameter::filled({spec.out_channels, in_per_group(), spec.kernel.t, spec.kernel.h, spec.kernel.w}, 0.0);
  if (spec.bias) bias_ = Parameter::filled({spec.out_channels}, 0.0);
}

void Conv3d::initialize(std::mt19937_64& rng, double gain) {
  const double fan_in = static_cast<double>(in_per_group()) * static_cast<double>(spec_.kernel.volume());
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
  for (double& w : weight_.value) w = dist(rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Conv3d::forward(const Tensor& x, Tape* tape) const {
  if (x.channels() != spec_.in_channels) {
    throw ShapeError(fmt::format("convolution expects {} input channels, got {}", spec_.in_channels, x.channels()));
  }
  const Dim3 out_extent = output_extent(x.extent());
  if (out_extent.t < 1 || out_extent.h < 1 || out_extent.w < 1) {
    throw ShapeError(fmt::format("convolution input {} too small for kernel {}", to_string(x.extent()),
                                 to_string(spec_.kernel)));
  }
  Tensor y(spec_.out_channels, out_extent);
  const ConvGeometry geo(x.extent(), out_extent, spec_.kernel, spec_.stride, spec_.padding);
  const int ipg = in_per_group();
  const std::size_t taps = spec_.kernel.volume();
  const std::size_t plane_out = y.plane_size();

  for (int oc = 0; oc < spec_.out_channels; ++oc) {
    double* yp = y.plane(oc);
    if (spec_.bias) std::fill(yp, yp + plane_out, bias_.value[static_cast<std::size_t>(oc)]);
    for (int g = 0; g < ipg; ++g) {
      const int ic = spec_.depthwise ? oc : g;
      const double* xp = x.plane(ic);
      const double* wk = weight_.value.data() + (static_cast<std::size_t>(oc) * ipg + g) * taps;
      if (geo.pointwise()) {
        const double wv = wk[0];
        for (std::size_t i = 0; i < plane_out; ++i) yp[i] += wv * xp[i];
        continue;
      }
      for (int kt = 0; kt < spec_.kernel.t; ++kt) {
        for (int kh = 0; kh < spec_.kernel.h; ++kh) {
          for (int kw = 0; kw < spec_.kernel.w; ++kw) {
            const double wv = wk[(static_cast<std::size_t>(kt) * spec_.kernel.h + kh) * spec_.kernel.w + kw];
            const auto& aw = geo.rw[static_cast<std::size_t>(kw)];
            const int sw = spec_.stride.w;
            const int shift = kw - spec_.padding.w;
            geo.for_each_row(kt, kh, [&](std::size_t orow, std::size_t irow) {
              double* yr = yp + orow;
              const double* xr = xp + irow;
              if (sw == 1) {
                for (int ow = aw.lo; ow <= aw.hi; ++ow) yr[ow] += wv * xr[ow + shift];
              } else {
                for (int ow = aw.lo; ow <= aw.hi; ++ow) yr[ow] += wv * xr[ow * sw + shift];
              }
            });
          }
        }
      }
    }
  }
  if (tape) tape->save(x);
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out, Tape& tape, bool input_grad) {
  const Tensor x = tape.restore();
  const Dim3 out_extent = output_extent(x.extent());
  if (grad_out.channels() != spec_.out_channels || grad_out.extent() != out_extent) {
    throw ShapeError(fmt::format("convolution gradient shape {} does not match output", grad_out.shape_string()));
  }
  const ConvGeometry geo(x.extent(), out_extent, spec_.kernel, spec_.stride, spec_.padding);
  const int ipg = in_per_group();
  const std::size_t taps = spec_.kernel.volume();
  const std::size_t plane_out = grad_out.plane_size();
  const int sw = spec_.stride.w;

  if (spec_.bias) {
    for (int oc = 0; oc < spec_.out_channels; ++oc) {
      const double* gp = grad_out.plane(oc);
      double s = 0.0;
      for (std::size_t i = 0; i < plane_out; ++i) s += gp[i];
      bias_.grad[static_cast<std::size_t>(oc)] += s;
    }
  }

  // Weight gradients.
  for (int oc = 0; oc < spec_.out_channels; ++oc) {
    const double* gp = grad_out.plane(oc);
    for (int g = 0; g < ipg; ++g) {
      const int ic = spec_.depthwise ? oc : g;
      const double* xp = x.plane(ic);
      double* gw = weight_.grad.data() + (static_cast<std::size_t>(oc) * ipg + g) * taps;
      if (geo.pointwise()) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane_out; ++i) s += gp[i] * xp[i];
        gw[0] += s;
        continue;
      }
      for (int kt = 0; kt < spec_.kernel.t; ++kt) {
        for (int kh = 0; kh < spec_.kernel.h; ++kh) {
          for (int kw = 0; kw < spec_.kernel.w; ++kw) {
            const auto& aw = geo.rw[static_cast<std::size_t>(kw)];
            const int shift = kw - spec_.padding.w;
            double s = 0.0;
            geo.for_each_row(kt, kh, [&](std::size_t orow, std::size_t irow) {
              const double* gr = gp + orow;
              const double* xr = xp + irow;
              for (int ow = aw.lo; ow <= aw.hi; ++ow) s += gr[ow] * xr[ow * sw + shift];
            });
            gw[(static_cast<std::size_t>(kt) * spec_.kernel.h + kh) * spec_.kernel.w + kw] += s;
          }
        }
      }
    }
  }

  if (!input_grad) return {};

  Tensor gx(spec_.in_channels, x.extent());
  const std::size_t plane_in = gx.plane_size();
  for (int ic = 0; ic < spec_.in_channels; ++ic) {
    double* gxp = gx.plane(ic);
    const int oc_begin = spec_.depthwise ? ic : 0;
    const int oc_end = spec_.depthwise ? ic + 1 : spec_.out_channels;
    const int g = spec_.depthwise ? 0 : ic;
    for (int oc = oc_begin; oc < oc_end; ++oc) {
      const double* gp = grad_out.plane(oc);
      const double* wk = weight_.value.data() + (static_cast<std::size_t>(oc) * ipg + g) * taps;
      if (geo.pointwise()) {
        const double wv = wk[0];
        for (std::size_t i = 0; i < plane_in; ++i) gxp[i] += wv * gp[i];
        continue;
      }
      for (int kt = 0; kt < spec_.kernel.t; ++kt) {
        for (int kh = 0; kh < spec_.kernel.h; ++kh) {
          for (int kw = 0; kw < spec_.kernel.w; ++kw) {
            const double wv = wk[(static_cast<std::size_t>(kt) * spec_.kernel.h + kh) * spec_.kernel.w + kw];
            const auto& aw = geo.rw[static_cast<std::size_t>(kw)];
            const int shift = kw - spec_.padding.w;
            geo.for_each_row(kt, kh, [&](std::size_t orow, std::size_t irow) {
              const double* gr = gp + orow;
              double* xr = gxp + irow;
              for (int ow = aw.lo; ow <= aw.hi; ++ow) xr[ow * sw + shift] += wv * gr[ow];
            });
          }
        }
      }
    }
  }
  return gx;
}

void Conv3d::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  fn(join_path(prefix, "weight"), weight_);
  if (spec_.bias) fn(join_path(prefix, "bias"), bias_);
}

ChannelNorm::ChannelNorm(int channels, double eps) : eps_(eps) {
  if (channels < 1) throw ConfigError("normalization needs at least one channel");
  gamma_ = Parameter::filled({channels}, 1.0);
  beta_ = Parameter::filled({channels}, 0.0);
  running_mean_ = Parameter::filled({channels}, 0.0, false);
  running_var_ = Parameter::filled({channels}, 1.0, false);
}

double ChannelNorm::inv_std(int c) const {
  return 1.0 / std::sqrt(running_var_.value[static_cast<std::size_t>(c)] + eps_);
}

Tensor ChannelNorm::forward(const Tensor& x, Tape* tape) const {
  if (x.channels() != channels()) {
    throw ShapeError(fmt::format("normalization expects {} channels, got {}", channels(), x.channels()));
  }
  Tensor y(x.channels(), x.extent());
  const auto n = x.plane_size();
  for (int c = 0; c < x.channels(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double scale = gamma_.value[ci] * inv_std(c);
    const double shift = beta_.value[ci] - running_mean_.value[ci] * scale;
    const double* xp = x.plane(c);
    double* yp = y.plane(c);
    for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] * scale + shift;
  }
  if (tape) tape->save(x);
  return y;
}

Tensor ChannelNorm::backward(const Tensor& grad_out, Tape& tape) {
  const Tensor x = tape.restore();
  if (!grad_out.same_shape(x)) throw ShapeError("normalization gradient shape mismatch");
  Tensor gx(x.channels(), x.extent());
  const auto n = x.plane_size();
  for (int c = 0; c < x.channels(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double is = inv_std(c);
    const double mean = running_mean_.value[ci];
    const double scale = gamma_.value[ci] * is;
    const double* gp = grad_out.plane(c);
    const double* xp = x.plane(c);
    double* gxp = gx.plane(c);
    double g_gamma = 0.0;
    double g_beta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g_gamma += gp[i] * (xp[i] - mean) * is;
      g_beta += gp[i];
      gxp[i] = gp[i] * scale;
    }
    gamma_.grad[ci] += g_gamma;
    beta_.grad[ci] += g_beta;
  }
  return gx;
}

void ChannelNorm::visit_parameters(const std::string& prefix, const ParameterVisitor& fn) {
  fn(join_path(prefix, "gamma"), gamma_);
  fn(join_path(prefix, "beta"), beta_);
  fn(join_path(prefix, "running_mean"), running_mean_);
  fn(join_path(prefix, "running_var"), running_var_);
}

Tensor MaxPool3d::forward(const Tensor& x, Tape* tape) const {
  const Dim3 in = x.extent();
  const Dim3 out = output_extent(in);
  if (out.t < 1 || out.h < 1 || out.w < 1) throw ShapeError("pooling input too small");
  Tensor y(x.channels(), out);
  std::vector<std::uint32_t> arg;
  if (tape) arg.resize(y.size());
  std::size_t o = 0;
  for (int c = 0; c < x.channels(); ++c) {
    const double* xp = x.plane(c);
    for (int ot = 0; ot < out.t; ++ot) {
      for (int oh = 0; oh < out.h; ++oh) {
        for (int ow = 0; ow < out.w; ++ow, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (int kt = 0; kt < kernel_.t; ++kt) {
            const int it = ot * stride_.t - padding_.t + kt;
            if (it < 0 || it >= in.t) continue;
            for (int kh = 0; kh < kernel_.h; ++kh) {
              const int ih = oh * stride_.h - padding_.h + kh;
              if (ih < 0 || ih >= in.h) continue;
              for (int kw = 0; kw < kernel_.w; ++kw) {
                const int iw = ow * stride_.w - padding_.w + kw;
                if (iw < 0 || iw >= in.w) continue;
                const std::size_t i = (static_cast<std::size_t>(it) * in.h + ih) * in.w + iw;
                if (xp[i] > best) {
                  best = xp[i];
                  best_i = i;
                }
              }
            }
          }
          y.values()[o] = best;
          if (tape) arg[o] = static_cast<std::uint32_t>(best_i);
        }
      }
    }
  }
  if (tape) {
    tape->save_indices(std::move(arg));
    tape->save_extent(in);
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& grad_out, Tape& tape) const {
  const Dim3 in = tape.restore_extent();
  const auto arg = tape.restore_indices();
  if (arg.size() != grad_out.size()) throw ShapeError("pooling gradient shape mismatch");
  Tensor gx(grad_out.channels(), in);
  const auto per_plane = grad_out.plane_size();
  for (int c = 0; c < grad_out.channels(); ++c) {
    const double* gp = grad_out.plane(c);
    double* gxp = gx.plane(c);
    const auto base = static_cast<std::size_t>(c) * per_plane;
    for (std::size_t o = 0; o < per_plane; ++o) gxp[arg[base + o]] += gp[o];
  }
  return gx;
}

Tensor relu(const Tensor& x, Tape* tape) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  if (tape) tape->save(y);
  return y;
}

Tensor relu_backward(const Tensor& grad_out, Tape& tape) {
  const Tensor y = tape.restore();
  if (!y.same_shape(grad_out)) throw ShapeError("relu gradient shape mismatch");
  Tensor gx = grad_out;
  auto yv = y.values();
  auto gv = gx.values();
  for (std::size_t i = 0; i < gv.size(); ++i) {
    if (!(yv[i] > 0.0)) gv[i] = 0.0;
  }
  return gx;
}

namespace {

// Linear interpolation taps for one axis: out[o] = in[i0] + lambda * (in[i1] - in[i0]).
struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> lambda;
};

Taps interpolation_taps(int n_in, int factor, int n_out) {
  Taps taps;
  taps.i0.resize(static_cast<std::size_t>(n_out));
  taps.i1.resize(static_cast<std::size_t>(n_out));
  taps.lambda.resize(static_cast<std::size_t>(n_out));
  for (int o = 0; o < n_out; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > n_in - 1) i0 = n_in - 1;
    const int i1 = std::min(i0 + 1, n_in - 1);
    const auto oi = static_cast<std::size_t>(o);
    taps.i0[oi] = i0;
    taps.i1[oi] = i1;
    taps.lambda[oi] = i1 == i0 ? 0.0 : src - i0;
  }
  return taps;
}

// Views a (C,T,H,W) tensor as [outer][axis][inner] for the given axis.
struct AxisView {
  std::size_t outer, len, inner;
};

AxisView axis_view(int channels, Dim3 e, int axis) {
  const auto c = static_cast<std::size_t>(channels);
  switch (axis) {
    case 0: return {c, static_cast<std::size_t>(e.t), static_cast<std::size_t>(e.h) * e.w};
    case 1: return {c * e.t, static_cast<std::size_t>(e.h), static_cast<std::size_t>(e.w)};
    default: return {c * e.t * e.h, static_cast<std::size_t>(e.w), 1};
  }
}

Dim3 with_axis(Dim3 e, int axis, int value) {
  if (axis == 0) e.t = value;
  else if (axis == 1) e.h = value;
  else e.w = value;
  return e;
}

int axis_of(Dim3 e, int axis) { return axis == 0 ? e.t : (axis == 1 ? e.h : e.w); }

Tensor resample_axis(const Tensor& x, int axis, int factor, int n_out) {
  const int n_in = axis_of(x.extent(), axis);
  Tensor y(x.channels(), with_axis(x.extent(), axis, n_out));
  const auto taps = interpolation_taps(n_in, factor, n_out);
  const auto vin = axis_view(x.channels(), x.extent(), axis);
  const auto vout = axis_view(y.channels(), y.extent(), axis);
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t a = 0; a < vin.outer; ++a) {
    for (std::size_t o = 0; o < vout.len; ++o) {
      const double* r0 = xv.data() + (a * vin.len + static_cast<std::size_t>(taps.i0[o])) * vin.inner;
      const double* r1 = xv.data() + (a * vin.len + static_cast<std::size_t>(taps.i1[o])) * vin.inner;
      double* dst = yv.data() + (a * vout.len + o) * vout.inner;
      const double lam = taps.lambda[o];
      for (std::size_t i = 0; i < vin.inner; ++i) dst[i] = r0[i] + lam * (r1[i] - r0[i]);
    }
  }
  return y;
}

Tensor resample_axis_backward(const Tensor& g, int axis, int factor, int n_in) {
  const int n_out = axis_of(g.extent(), axis);
  Tensor gx(g.channels(), with_axis(g.extent(), axis, n_in));
  const auto taps = interpolation_taps(n_in, factor, n_out);
  const auto vin = axis_view(gx.channels(), gx.extent(), axis);
  const auto vout = axis_view(g.channels(), g.extent(), axis);
  auto gv = g.values();
  auto xv = gx.values();
  for (std::size_t a = 0; a < vin.outer; ++a) {
    for (std::size_t o = 0; o < vout.len; ++o) {
      double* r0 = xv.data() + (a * vin.len + static_cast<std::size_t>(taps.i0[o])) * vin.inner;
      double* r1 = xv.data() + (a * vin.len + static_cast<std::size_t>(taps.i1[o])) * vin.inner;
      const double* src = gv.data() + (a * vout.len + o) * vout.inner;
      const double lam = taps.lambda[o];
      for (std::size_t i = 0; i < vin.inner; ++i) {
        r0[i] += (1.0 - lam) * src[i];
        r1[i] += lam * src[i];
      }
    }
  }
  return gx;
}

}  // namespace

Tensor upsample_trilinear(const Tensor& x, Dim3 factor, Dim3 target, Tape* tape) {
  if (factor.t < 1 || factor.h < 1 || factor.w < 1) throw ShapeError("upsample factors must be positive");
  const Dim3 in = x.extent();
  if (target.t < 1 || target.h < 1 || target.w < 1 || target.t > in.t * factor.t || target.h > in.h * factor.h ||
      target.w > in.w * factor.w) {
    throw ShapeError(fmt::format("cannot upsample {} by {} to {}", to_string(in), to_string(factor), to_string(target)));
  }
  Tensor y = resample_axis(x, 0, factor.t, target.t);
  y = resample_axis(y, 1, factor.h, target.h);
  y = resample_axis(y, 2, factor.w, target.w);
  if (tape) tape->save_extent(in);
  return y;
}

Tensor upsample_trilinear_backward(const Tensor& grad_out, Dim3 factor, Tape& tape) {
  const Dim3 in = tape.restore_extent();
  Tensor g = resample_axis_backward(grad_out, 2, factor.w, in.w);
  g = resample_axis_backward(g, 1, factor.h, in.h);
  return resample_axis_backward(g, 0, factor.t, in.t);
}

}  // namespace vsod
