#include "vsod/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "vsod/errors.hpp"

namespace vsod {

namespace {

void check_dims(int frames, int height, int width, const char* what) {
  if (frames < 1 || height < 1 || width < 1) {
    throw InvalidArgument(fmt::format("{} requires T, H, W >= 1, got {}x{}x{}", what, frames, height, width));
  }
}

std::size_t volume(int frames, int height, int width) {
  return static_cast<std::size_t>(frames) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

}  // namespace

template <class Value>
BasicVideo<Value>::BasicVideo(int frames, int height, int width, std::vector<Value> data,
                              std::optional<double> frame_rate)
    : frames_(frames), height_(height), width_(width), data_(std::move(data)), frame_rate_(frame_rate) {
  validate();
}

template <class Value>
BasicVideo<Value>::BasicVideo(int frames, int height, int width, Value fill)
    : frames_(frames), height_(height), width_(width) {
  check_dims(frames, height, width, "video");
  data_.assign(volume(frames, height, width) * kChannels, fill);
  validate();
}

template <class Value>
void BasicVideo<Value>::validate() const {
  check_dims(frames_, height_, width_, "video");
  if (data_.size() != volume(frames_, height_, width_) * kChannels) {
    throw ShapeError(fmt::format("video data holds {} values, expected {}x{}x{}x3", data_.size(), frames_,
                                 height_, width_));
  }
  if constexpr (std::is_floating_point_v<Value>) {
    for (Value v : data_) {
      if (!std::isfinite(v)) throw InvalidArgument("video contains non-finite values");
    }
  }
  if (frame_rate_ && !(*frame_rate_ > 0.0)) throw InvalidArgument("frame rate must be positive");
}

template <class Value>
BasicVideo<Value> BasicVideo<Value>::slice(int first, int count) const {
  if (first < 0 || count < 1 || first + count > frames_) {
    throw InvalidArgument(fmt::format("frame slice [{}, {}) outside clip of {} frames", first, first + count, frames_));
  }
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(frame_size() * first);
  std::vector<Value> out(begin, begin + static_cast<std::ptrdiff_t>(frame_size() * count));
  return BasicVideo(count, height_, width_, std::move(out), frame_rate_);
}

template class BasicVideo<double>;
template class BasicVideo<std::uint8_t>;

BinaryMask::BinaryMask(int h, int w, std::uint8_t fill) : height(h), width(w) {
  if (h < 1 || w < 1) throw InvalidArgument(fmt::format("mask size {}x{} must be positive", h, w));
  if (fill > 1) throw InvalidArgument("mask fill must be 0 or 1");
  data.assign(static_cast<std::size_t>(h) * w, fill);
}

BinaryMask::BinaryMask(int h, int w, std::vector<std::uint8_t> values)
    : height(h), width(w), data(std::move(values)) {
  if (h < 1 || w < 1) throw InvalidArgument(fmt::format("mask size {}x{} must be positive", h, w));
  if (data.size() != static_cast<std::size_t>(h) * w) throw ShapeError("mask data does not match its size");
  for (auto v : data) {
    if (v > 1) throw InvalidArgument("mask values must be 0 or 1");
  }
}

std::size_t BinaryMask::area() const noexcept {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

FloatMap::FloatMap(int h, int w, double fill) : height(h), width(w) {
  if (h < 1 || w < 1) throw InvalidArgument(fmt::format("map size {}x{} must be positive", h, w));
  data.assign(static_cast<std::size_t>(h) * w, fill);
}

FloatMap to_float_map(const BinaryMask& mask) {
  FloatMap out(mask.height, mask.width);
  std::transform(mask.data.begin(), mask.data.end(), out.data.begin(), [](std::uint8_t v) { return double(v); });
  return out;
}

MaskSequence::MaskSequence(int frames, int height, int width, std::uint8_t fill)
    : MaskSequence(frames, height, width, std::vector<std::uint8_t>(volume(std::max(frames, 0), std::max(height, 0),
                                                                           std::max(width, 0)),
                                                                    fill)) {}

MaskSequence::MaskSequence(int frames, int height, int width, std::vector<std::uint8_t> data)
    : frames_(frames), height_(height), width_(width), data_(std::move(data)) {
  check_dims(frames, height, width, "mask sequence");
  if (data_.size() != volume(frames, height, width)) throw ShapeError("mask sequence data does not match its shape");
  for (auto v : data_) {
    if (v > 1) throw InvalidArgument("mask values must be 0 or 1");
  }
}

MaskSequence::MaskSequence(std::span<const BinaryMask> frames) {
  if (frames.empty()) throw InvalidArgument("mask sequence needs at least one frame");
  frames_ = static_cast<int>(frames.size());
  height_ = frames.front().height;
  width_ = frames.front().width;
  check_dims(frames_, height_, width_, "mask sequence");
  data_.reserve(volume(frames_, height_, width_));
  for (const auto& f : frames) {
    if (f.height != height_ || f.width != width_) throw ShapeError("mask frames differ in size");
    data_.insert(data_.end(), f.data.begin(), f.data.end());
  }
}

void MaskSequence::set(int t, int y, int x, std::uint8_t value) {
  if (value > 1) throw InvalidArgument("mask values must be 0 or 1");
  data_[index(t, y, x)] = value;
}

BinaryMask MaskSequence::frame(int t) const {
  const auto n = static_cast<std::size_t>(height_) * width_;
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(n * t);
  return BinaryMask(height_, width_, std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(n)));
}

ProbabilityMaps::ProbabilityMaps(int frames, int height, int width, std::vector<double> data,
                                 std::vector<int> coverage_counts)
    : frames_(frames), height_(height), width_(width), data_(std::move(data)), coverage_(std::move(coverage_counts)) {
  check_dims(frames, height, width, "probability maps");
  if (data_.size() != volume(frames, height, width)) throw ShapeError("probability data does not match its shape");
  if (coverage_.size() != static_cast<std::size_t>(frames)) throw ShapeError("one coverage count per frame required");
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(fmt::format("probability {} outside [0,1]", v));
  }
  for (int c : coverage_) {
    if (c < 1) throw InvalidArgument("every frame needs coverage >= 1");
  }
}

ProbabilityMaps::ProbabilityMaps(int frames, int height, int width, double fill)
    : ProbabilityMaps(frames, height, width,
                      std::vector<double>(volume(std::max(frames, 0), std::max(height, 0), std::max(width, 0)), fill),
                      std::vector<int>(static_cast<std::size_t>(std::max(frames, 0)), 1)) {}

FloatMap ProbabilityMaps::frame(int t) const {
  FloatMap out(height_, width_);
  const auto n = out.size();
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(n * t), n, out.data.begin());
  return out;
}

FeaturePyramid::FeaturePyramid(std::array<FeatureLevel, kLevels> levels) : levels_(std::move(levels)) {
  for (std::size_t i = 0; i < kLevels; ++i) {
    if (levels_[i].spatial_stride < 1 || levels_[i].temporal_stride < 1) {
      throw ShapeError("pyramid strides must be positive");
    }
    if (i > 0 && levels_[i].spatial_stride <= levels_[i - 1].spatial_stride) {
      throw ShapeError("pyramid spatial strides must be strictly increasing");
    }
    if (i > 0 && levels_[i].temporal_stride < levels_[i - 1].temporal_stride) {
      throw ShapeError("pyramid temporal strides must be non-decreasing");
    }
  }
  if (levels_.back().spatial_stride != 32) throw ShapeError("deepest pyramid level must have spatial stride 32");
}

void FeaturePyramid::check_against(Dim3 input) const {
  auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
  for (std::size_t i = 0; i < kLevels; ++i) {
    const auto& lv = levels_[i];
    const Dim3 expected{ceil_div(input.t, lv.temporal_stride), ceil_div(input.h, lv.spatial_stride),
                        ceil_div(input.w, lv.spatial_stride)};
    if (lv.features.extent() != expected) {
      throw ShapeError(fmt::format("pyramid level {} has extent {}, expected {} for input {}", i,
                                   to_string(lv.features.extent()), to_string(expected), to_string(input)));
    }
  }
}

bool operator==(const FeaturePyramid& a, const FeaturePyramid& b) {
  for (std::size_t i = 0; i < FeaturePyramid::kLevels; ++i) {
    const auto& x = a.levels_[i];
    const auto& y = b.levels_[i];
    if (x.spatial_stride != y.spatial_stride || x.temporal_stride != y.temporal_stride || !(x.features == y.features)) {
      return false;
    }
  }
  return true;
}

template <class Value>
BasicVideo<Value> pad_clip_to_length(const BasicVideo<Value>& clip, int target) {
  if (target < clip.frames()) {
    throw InvalidArgument(fmt::format("cannot pad a {}-frame clip to {} frames", clip.frames(), target));
  }
  std::vector<Value> data(clip.values().begin(), clip.values().end());
  const auto last = clip.frame(clip.frames() - 1);
  for (int t = clip.frames(); t < target; ++t) data.insert(data.end(), last.begin(), last.end());
  return BasicVideo<Value>(target, clip.height(), clip.width(), std::move(data), clip.frame_rate());
}

template VideoTensor pad_clip_to_length(const VideoTensor&, int);
template Video8 pad_clip_to_length(const Video8&, int);

VideoTensor normalize_clip(const Video8& clip, const ChannelNormalization& norm) {
  for (int c = 0; c < 3; ++c) {
    if (!(norm.std[c] > 0.0)) throw InvalidArgument(fmt::format("std component {} must be positive", c));
  }
  std::vector<double> out(clip.values().size());
  auto in = clip.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto c = i % 3;
    out[i] = (static_cast<double>(in[i]) / 255.0 - norm.mean[c]) / norm.std[c];
  }
  return VideoTensor(clip.frames(), clip.height(), clip.width(), std::move(out), clip.frame_rate());
}

VideoTensor denormalize_clip(const VideoTensor& clip, const ChannelNormalization& norm) {
  std::vector<double> out(clip.values().size());
  auto in = clip.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto c = i % 3;
    out[i] = (in[i] * norm.std[c] + norm.mean[c]) * 255.0;
  }
  return VideoTensor(clip.frames(), clip.height(), clip.width(), std::move(out), clip.frame_rate());
}

Tensor to_tensor(const VideoTensor& clip) {
  Tensor out(3, clip.extent());
  const auto n = out.plane_size();
  auto in = clip.values();
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) out.plane(c)[p] = in[p * 3 + static_cast<std::size_t>(c)];
  }
  return out;
}

std::vector<double> to_frames(const Tensor& single_channel) {
  if (single_channel.channels() != 1) {
    throw ShapeError(fmt::format("expected a single-channel tensor, got {}", single_channel.shape_string()));
  }
  return {single_channel.values().begin(), single_channel.values().end()};
}

}  // namespace vsod
