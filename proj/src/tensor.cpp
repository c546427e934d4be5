#include "vsod/tensor.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "vsod/errors.hpp"

namespace vsod {

std::string to_string(const Dim3& d) { return fmt::format("{}x{}x{}", d.t, d.h, d.w); }

Tensor::Tensor(int channels, Dim3 extent, double fill) : channels_(channels), extent_(extent) {
  if (channels < 0 || extent.t < 0 || extent.h < 0 || extent.w < 0) {
    throw ShapeError(fmt::format("negative tensor shape {}x{}", channels, to_string(extent)));
  }
  data_.assign(static_cast<std::size_t>(channels) * extent.volume(), fill);
}

std::string Tensor::shape_string() const {
  return fmt::format("({}, {})", channels_, to_string(extent_));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError(fmt::format("cannot add {} and {}", shape_string(), other.shape_string()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Tensor operator+(Tensor lhs, const Tensor& rhs) {
  lhs += rhs;
  return lhs;
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(fmt::format("dot of {} and {}", a.shape_string(), b.shape_string()));
  }
  double sum = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) sum += av[i] * bv[i];
  return sum;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.extent() != b.extent()) {
    throw ShapeError(fmt::format("concat of {} and {}", a.shape_string(), b.shape_string()));
  }
  Tensor out(a.channels() + b.channels(), a.extent());
  auto dst = out.values();
  std::copy(a.values().begin(), a.values().end(), dst.begin());
  std::copy(b.values().begin(), b.values().end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

Tensor slice_channels(const Tensor& x, int first, int count) {
  if (first < 0 || count < 0 || first + count > x.channels()) {
    throw ShapeError(fmt::format("channel slice [{}, {}) of {}", first, first + count, x.shape_string()));
  }
  Tensor out(count, x.extent());
  const auto n = x.plane_size();
  std::copy(x.plane(first), x.plane(first) + n * static_cast<std::size_t>(count), out.plane(0));
  return out;
}

}  // namespace vsod
