#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_common.hpp"
#include "vsod/core_types.hpp"
#include "vsod/errors.hpp"

namespace vsod {
namespace {

VideoTensor distinct_frames(int frames, int h = 2, int w = 3) {
  std::vector<double> data;
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < h * w * 3; ++i) data.push_back(t * 100.0 + i);
  return VideoTensor(frames, h, w, data);
}

TEST(VideoTensor, RejectsBadDimensions) {
  EXPECT_THROW(VideoTensor(0, 4, 4), InvalidArgument);
  EXPECT_THROW(VideoTensor(1, 0, 4), InvalidArgument);
  EXPECT_THROW(VideoTensor(1, 4, -1), InvalidArgument);
}

TEST(VideoTensor, RejectsWrongDataSize) {
  EXPECT_THROW(VideoTensor(1, 2, 2, std::vector<double>(11)), ShapeError);
}

TEST(VideoTensor, RejectsNonFiniteValues) {
  std::vector<double> data(12, 0.0);
  data[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(VideoTensor(1, 2, 2, data), InvalidArgument);
  data[5] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(VideoTensor(1, 2, 2, data), InvalidArgument);
}

TEST(VideoTensor, LayoutIsTHWC) {
  const VideoTensor v = distinct_frames(2, 2, 3);
  EXPECT_EQ(v.at(1, 1, 2, 0), 100.0 + ((1 * 3 + 2) * 3 + 0));
  EXPECT_EQ(v.at(0, 0, 1, 2), 5.0);
}

TEST(MaskSequence, RejectsNonBinaryValues) {
  EXPECT_THROW(MaskSequence(1, 1, 2, std::vector<std::uint8_t>{0, 2}), InvalidArgument);
  EXPECT_THROW(BinaryMask(1, 2, std::vector<std::uint8_t>{1, 3}), InvalidArgument);
}

TEST(MaskSequence, MatchesVideoShape) {
  const MaskSequence m(3, 2, 3);
  EXPECT_TRUE(m.matches(distinct_frames(3, 2, 3)));
  EXPECT_FALSE(m.matches(distinct_frames(2, 2, 3)));
}

TEST(ProbabilityMaps, RejectsOutOfRangeAndZeroCoverage) {
  EXPECT_THROW(ProbabilityMaps(1, 1, 2, {0.5, 1.5}, {1}), InvalidArgument);
  EXPECT_THROW(ProbabilityMaps(1, 1, 2, {0.5, -0.1}, {1}), InvalidArgument);
  EXPECT_THROW(ProbabilityMaps(1, 1, 2, {0.5, 0.5}, {0}), InvalidArgument);
  EXPECT_THROW(ProbabilityMaps(2, 1, 2, {0.5, 0.5, 0.5, 0.5}, {1}), ShapeError);
  EXPECT_NO_THROW(ProbabilityMaps(1, 1, 2, {0.0, 1.0}, {2}));
}

TEST(FeaturePyramid, ChecksCeilDivisionExtents) {
  std::array<FeatureLevel, 4> levels;
  const int strides[4] = {4, 8, 16, 32};
  for (int i = 0; i < 4; ++i) {
    const int s = strides[i];
    levels[i] = {Tensor(2, {4, (50 + s - 1) / s, (70 + s - 1) / s}), s, 1};
  }
  FeaturePyramid pyramid(levels);
  EXPECT_NO_THROW(pyramid.check_against({4, 50, 70}));
  EXPECT_THROW(pyramid.check_against({4, 64, 70}), ShapeError);
}

TEST(FeaturePyramid, RejectsBadStrides) {
  std::array<FeatureLevel, 4> levels;
  for (int i = 0; i < 4; ++i) levels[i] = {Tensor(1, {1, 1, 1}), 4 << i, 1};
  levels[3].spatial_stride = 64;
  EXPECT_THROW(FeaturePyramid{levels}, ShapeError);
  levels[3].spatial_stride = 8;
  EXPECT_THROW(FeaturePyramid{levels}, ShapeError);
}

TEST(PadClip, SameLengthIsIdentity) {
  const VideoTensor v = distinct_frames(8);
  EXPECT_EQ(pad_clip_to_length(v, 8), v);
}

TEST(PadClip, SingleFrameIsRepeated) {
  const VideoTensor v = distinct_frames(1);
  const VideoTensor p = pad_clip_to_length(v, 8);
  ASSERT_EQ(p.frames(), 8);
  for (int t = 0; t < 8; ++t) EXPECT_EQ(p.slice(t, 1), v);
}

TEST(PadClip, RepeatsLastFrame) {
  const VideoTensor v = distinct_frames(5);
  const VideoTensor p = pad_clip_to_length(v, 8);
  const int expected[8] = {0, 1, 2, 3, 4, 4, 4, 4};
  for (int t = 0; t < 8; ++t) EXPECT_EQ(p.slice(t, 1), v.slice(expected[t], 1)) << t;
}

TEST(PadClip, ShorterTargetIsRejected) {
  EXPECT_THROW(pad_clip_to_length(distinct_frames(5), 4), InvalidArgument);
}

TEST(PadClip, IdempotentAtTarget) {
  const VideoTensor p = pad_clip_to_length(distinct_frames(3), 6);
  EXPECT_EQ(pad_clip_to_length(p, 6), p);
}

TEST(NormalizeClip, KnownValues) {
  const ChannelNormalization unit{{0, 0, 0}, {1, 1, 1}};
  const Video8 black(1, 1, 1, std::uint8_t{0});
  const Video8 white(1, 1, 1, std::uint8_t{255});
  EXPECT_EQ(normalize_clip(black, unit).at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_clip(white, unit).at(0, 0, 0, 1), 1.0);
  const ChannelNormalization quarter{{0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}};
  const Video8 mid(1, 1, 1, std::uint8_t{128});
  EXPECT_NEAR(normalize_clip(mid, quarter).at(0, 0, 0, 2), (128.0 / 255.0 - 0.5) / 0.25, 1e-15);
  EXPECT_NEAR(normalize_clip(mid, quarter).at(0, 0, 0, 2), 0.00784, 1e-5);
}

TEST(NormalizeClip, ZeroStdIsRejected) {
  ChannelNormalization norm;
  norm.std[1] = 0.0;
  EXPECT_THROW(normalize_clip(Video8(1, 1, 1), norm), InvalidArgument);
}

TEST(NormalizeClip, InverseReconstructs) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<std::uint8_t> data(3 * 5 * 7 * 3);
  for (auto& v : data) v = static_cast<std::uint8_t>(u(rng));
  const Video8 raw(3, 5, 7, data);
  const VideoTensor back = denormalize_clip(normalize_clip(raw, {}), {});
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(back.values()[i], data[i], 1e-6);
}

TEST(Conversions, ToTensorIsChannelMajor) {
  const VideoTensor v = distinct_frames(2, 2, 3);
  const Tensor t = to_tensor(v);
  ASSERT_EQ(t.channels(), 3);
  for (int f = 0; f < 2; ++f)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(t.at(c, f, y, x), v.at(f, y, x, c));
}

TEST(Conversions, ToFramesNeedsOneChannel) {
  EXPECT_THROW(to_frames(Tensor(2, {1, 1, 1})), ShapeError);
  Tensor t(1, {2, 1, 2});
  t.at(0, 1, 0, 1) = 3.0;
  EXPECT_EQ(to_frames(t), (std::vector<double>{0, 0, 0, 3}));
}

}  // namespace
}  // namespace vsod
