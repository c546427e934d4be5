#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vsod {

/// Extent or per-axis quantity over (time, height, width).
struct Dim3 {
  int t = 1;
  int h = 1;
  int w = 1;

  constexpr std::size_t volume() const noexcept {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  friend constexpr bool operator==(const Dim3&, const Dim3&) = default;
};

std::string to_string(const Dim3& d);

/// Dense feature tensor stored channel-major as (C, T, H, W).
///
/// This is the internal layout used by every layer. Clip-level types at API
/// boundaries use (T, H, W, C); see core_types.hpp for the conversions.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, Dim3 extent, double fill = 0.0);

  int channels() const noexcept { return channels_; }
  const Dim3& extent() const noexcept { return extent_; }
  std::size_t plane_size() const noexcept { return extent_.volume(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* plane(int c) noexcept { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }
  const double* plane(int c) const noexcept {
    return data_.data() + static_cast<std::size_t>(c) * plane_size();
  }

  std::size_t offset(int c, int t, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(c) * extent_.t + t) * extent_.h + h) * extent_.w + w;
  }
  double& at(int c, int t, int h, int w) noexcept { return data_[offset(c, t, h, w)]; }
  double at(int c, int t, int h, int w) const noexcept { return data_[offset(c, t, h, w)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Tensor& other) const noexcept {
    return channels_ == other.channels_ && extent_ == other.extent_;
  }
  std::string shape_string() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double scale);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int channels_ = 0;
  Dim3 extent_{0, 0, 0};
  std::vector<double> data_;
};

Tensor operator+(Tensor lhs, const Tensor& rhs);

/// Sum of element-wise products; shapes must match.
double dot(const Tensor& a, const Tensor& b);

/// Stacks the channels of `a` followed by those of `b`; extents must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Inverse of concat_channels: returns channels [first, first + count).
Tensor slice_channels(const Tensor& x, int first, int count);

}  // namespace vsod
