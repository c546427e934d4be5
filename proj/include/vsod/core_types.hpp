#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vsod/tensor.hpp"

namespace vsod {

/// A clip of RGB frames laid out as (T, H, W, 3).
///
/// `Value` is `double` for normalized clips (the network's input) and
/// `std::uint8_t` for raw frames as they come off disk.
template <class Value>
class BasicVideo {
 public:
  static constexpr int kChannels = 3;

  BasicVideo() = default;
  BasicVideo(int frames, int height, int width, std::vector<Value> data,
             std::optional<double> frame_rate = std::nullopt);
  BasicVideo(int frames, int height, int width, Value fill = Value{});

  int frames() const noexcept { return frames_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Dim3 extent() const noexcept { return {frames_, height_, width_}; }
  const std::optional<double>& frame_rate() const noexcept { return frame_rate_; }

  std::size_t frame_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_) * kChannels;
  }
  std::span<const Value> frame(int t) const noexcept {
    return {data_.data() + static_cast<std::size_t>(t) * frame_size(), frame_size()};
  }
  std::span<const Value> values() const noexcept { return data_; }

  Value at(int t, int y, int x, int c) const noexcept { return data_[index(t, y, x, c)]; }

  /// Copies frames [first, first + count) into a new clip.
  BasicVideo slice(int first, int count) const;

  friend bool operator==(const BasicVideo&, const BasicVideo&) = default;

 private:
  std::size_t index(int t, int y, int x, int c) const noexcept {
    return ((static_cast<std::size_t>(t) * height_ + y) * width_ + x) * kChannels + c;
  }
  void validate() const;

  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<Value> data_;
  std::optional<double> frame_rate_;
};

using VideoTensor = BasicVideo<double>;
using Video8 = BasicVideo<std::uint8_t>;

/// Single-frame binary mask (H, W), values in {0, 1}.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w, std::uint8_t fill = 0);
  BinaryMask(int h, int w, std::vector<std::uint8_t> values);

  std::uint8_t at(int y, int x) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t area() const noexcept;
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Single-frame float map (H, W); used for per-frame probabilities.
struct FloatMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FloatMap() = default;
  FloatMap(int h, int w, double fill = 0.0);

  double at(int y, int x) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const FloatMap&, const FloatMap&) = default;
};

FloatMap to_float_map(const BinaryMask& mask);

/// Binary masks for a whole clip, (T, H, W).
class MaskSequence {
 public:
  MaskSequence() = default;
  MaskSequence(int frames, int height, int width, std::uint8_t fill = 0);
  MaskSequence(int frames, int height, int width, std::vector<std::uint8_t> data);
  explicit MaskSequence(std::span<const BinaryMask> frames);

  int frames() const noexcept { return frames_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Dim3 extent() const noexcept { return {frames_, height_, width_}; }

  std::uint8_t at(int t, int y, int x) const noexcept { return data_[index(t, y, x)]; }
  void set(int t, int y, int x, std::uint8_t value);
  std::span<const std::uint8_t> values() const noexcept { return data_; }

  BinaryMask frame(int t) const;
  bool matches(const VideoTensor& clip) const noexcept { return extent() == clip.extent(); }

  friend bool operator==(const MaskSequence&, const MaskSequence&) = default;

 private:
  std::size_t index(int t, int y, int x) const noexcept {
    return (static_cast<std::size_t>(t) * height_ + y) * width_ + x;
  }

  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Per-frame foreground probabilities (T, H, W) plus how many inference
/// windows contributed to each frame.
class ProbabilityMaps {
 public:
  ProbabilityMaps() = default;
  ProbabilityMaps(int frames, int height, int width, std::vector<double> data,
                  std::vector<int> coverage_counts);
  ProbabilityMaps(int frames, int height, int width, double fill);

  int frames() const noexcept { return frames_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Dim3 extent() const noexcept { return {frames_, height_, width_}; }

  double at(int t, int y, int x) const noexcept { return data_[index(t, y, x)]; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<int>& coverage_counts() const noexcept { return coverage_; }

  FloatMap frame(int t) const;

  friend bool operator==(const ProbabilityMaps&, const ProbabilityMaps&) = default;

 private:
  std::size_t index(int t, int y, int x) const noexcept {
    return (static_cast<std::size_t>(t) * height_ + y) * width_ + x;
  }

  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
  std::vector<int> coverage_;
};

struct FeatureLevel {
  Tensor features;
  int spatial_stride = 1;
  int temporal_stride = 1;
};

/// The encoder's four multi-scale outputs, finest first.
class FeaturePyramid {
 public:
  static constexpr std::size_t kLevels = 4;

  FeaturePyramid() = default;
  explicit FeaturePyramid(std::array<FeatureLevel, kLevels> levels);

  const FeatureLevel& level(std::size_t i) const { return levels_.at(i); }
  const std::array<FeatureLevel, kLevels>& levels() const noexcept { return levels_; }

  /// Throws ShapeError unless each level has spatial size ceil(H/stride) x
  /// ceil(W/stride) for an input clip of the given extent.
  void check_against(Dim3 input_extent) const;

  friend bool operator==(const FeaturePyramid& a, const FeaturePyramid& b);

 private:
  std::array<FeatureLevel, kLevels> levels_;
};

/// Per-channel normalization constants applied to 8-bit frames scaled to [0,1].
struct ChannelNormalization {
  std::array<double, 3> mean{0.43216, 0.394666, 0.37645};
  std::array<double, 3> std{0.22803, 0.22145, 0.216989};

  friend bool operator==(const ChannelNormalization&, const ChannelNormalization&) = default;
};

/// Extends a clip to `target` frames by repeating its last frame.
template <class Value>
BasicVideo<Value> pad_clip_to_length(const BasicVideo<Value>& clip, int target);

/// out = (in / 255 - mean) / std, per channel.
VideoTensor normalize_clip(const Video8& clip, const ChannelNormalization& norm);

/// Algebraic inverse of normalize_clip, without rounding back to 8 bits:
/// returns values on the 0..255 scale.
VideoTensor denormalize_clip(const VideoTensor& clip, const ChannelNormalization& norm);

/// Converts a (T,H,W,3) clip to a (3,T,H,W) tensor.
Tensor to_tensor(const VideoTensor& clip);

/// Converts a single-channel tensor (1,T,H,W) into a (T,H,W) value array.
std::vector<double> to_frames(const Tensor& single_channel);

}  // namespace vsod
