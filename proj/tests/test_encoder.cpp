#include <gtest/gtest.h>

#include "test_common.hpp"
#include "vsod/encoder.hpp"
#include "vsod/errors.hpp"

namespace vsod {
namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.stage_depths = {1, 1, 1, 1};
  cfg.base_width = 8;
  return cfg;
}

void zero_conv_weights(Bottleneck& block) {
  block.visit_parameters("", [](const std::string& path, Parameter& p) {
    if (path.ends_with("weight") || path.ends_with("bias")) std::fill(p.value.begin(), p.value.end(), 0.0);
  });
}

TEST(Encoder, DefaultParameterCountMatchesPaper) {
  const Encoder enc(EncoderConfig{});
  const double n = static_cast<double>(count_parameters(enc));
  EXPECT_NEAR(n / 28.7e6, 1.0, 0.05) << n;
}

TEST(Encoder, RejectsBadConfig) {
  EncoderConfig cfg;
  cfg.stage_depths = {3, 8, 36};
  EXPECT_THROW(build_encoder(cfg), ConfigError);
  cfg = EncoderConfig{};
  cfg.stage_depths[2] = 0;
  EXPECT_THROW(build_encoder(cfg), ConfigError);
  cfg = EncoderConfig{};
  cfg.temporal_strides[1] = 3;
  EXPECT_THROW(build_encoder(cfg), ConfigError);
}

TEST(Encoder, TinyForwardOn8x64x64) {
  const Encoder enc = build_encoder(tiny_encoder(), 1);
  std::mt19937_64 rng(2);
  const FeaturePyramid p = enc.encode(test::random_clip(8, 64, 64, rng));
  const int strides[4] = {4, 8, 16, 32};
  const int frames[4] = {8, 4, 2, 1};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p.level(i).spatial_stride, strides[i]);
    EXPECT_EQ(p.level(i).features.extent(), (Dim3{frames[i], 64 / strides[i], 64 / strides[i]}));
    EXPECT_EQ(p.level(i).features.channels(), tiny_encoder().stage_channels(i));
  }
}

TEST(Encoder, StrideArithmeticAt224) {
  const Encoder enc = build_encoder(tiny_encoder(), 1);
  std::mt19937_64 rng(3);
  const FeaturePyramid p = enc.encode(test::random_clip(8, 224, 224, rng));
  EXPECT_EQ(p.level(0).features.extent(), (Dim3{8, 56, 56}));
  EXPECT_EQ(p.level(1).features.extent(), (Dim3{4, 28, 28}));
  EXPECT_EQ(p.level(2).features.extent(), (Dim3{2, 14, 14}));
  EXPECT_EQ(p.level(3).features.extent(), (Dim3{1, 7, 7}));
}

TEST(Encoder, UnitTemporalStridesKeepFrames) {
  EncoderConfig cfg = tiny_encoder();
  cfg.temporal_strides = {1, 1, 1, 1};
  const Encoder enc = build_encoder(cfg, 1);
  std::mt19937_64 rng(4);
  const FeaturePyramid p = enc.encode(test::random_clip(8, 64, 64, rng));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(p.level(i).features.extent().t, 8);
}

TEST(Encoder, DeterministicForward) {
  const Encoder enc = build_encoder(tiny_encoder(), 5);
  std::mt19937_64 rng(6);
  const VideoTensor clip = test::random_clip(4, 40, 36, rng);
  EXPECT_TRUE(enc.encode(clip) == enc.encode(clip));
  EXPECT_TRUE(build_encoder(tiny_encoder(), 5).encode(clip) == enc.encode(clip));
}

TEST(Encoder, EmptyClipIsRejected) {
  const Encoder enc = build_encoder(tiny_encoder(), 1);
  EXPECT_THROW(enc.forward(Tensor(3, {0, 0, 0})), InvalidArgument);
}

TEST(Encoder, PyramidExtentsCeilDivideForRandomSizes) {
  const Encoder enc = build_encoder(tiny_encoder(), 1);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> side(17, 75);
  std::uniform_int_distribution<int> len(1, 9);
  for (int trial = 0; trial < 12; ++trial) {
    const int t = len(rng), h = side(rng), w = side(rng);
    const FeaturePyramid p = enc.encode(test::random_clip(t, h, w, rng));
    EXPECT_NO_THROW(p.check_against({t, h, w})) << t << "x" << h << "x" << w;
  }
}

TEST(Encoder, DenseVariantHasMoreParametersAndSameShapes) {
  EncoderConfig sep = tiny_encoder();
  EncoderConfig dense = sep;
  dense.channel_separated = false;
  const Encoder a = build_encoder(sep, 1);
  const Encoder b = build_encoder(dense, 1);
  EXPECT_LT(count_parameters(a), count_parameters(b));
  std::mt19937_64 rng(8);
  const VideoTensor clip = test::random_clip(4, 48, 48, rng);
  const FeaturePyramid pa = a.encode(clip), pb = b.encode(clip);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(pa.level(i).features.same_shape(pb.level(i).features));
  EXPECT_LT(count_parameters(Encoder(EncoderConfig{})),
            count_parameters(Encoder([] {
              EncoderConfig c;
              c.channel_separated = false;
              return c;
            }())));
}

TEST(Bottleneck, ClosedFormCounts) {
  BottleneckSpec spec{256, 64, 256, 1, 1, true};
  EXPECT_EQ(bottleneck_parameter_count(spec, false), 34496u);
  spec.channel_separated = false;
  EXPECT_EQ(bottleneck_parameter_count(spec, false), 143360u);
  // The 3x3x3 part alone: 27 C_mid^2 dense against 27 C_mid depthwise.
  EXPECT_EQ(bottleneck_parameter_count(spec, false) - 2u * 256 * 64, 27u * 64 * 64);
}

TEST(Bottleneck, CountMatchesModuleForRandomSpecs) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> ch(1, 24);
  for (int trial = 0; trial < 40; ++trial) {
    BottleneckSpec spec;
    spec.in_channels = ch(rng);
    spec.out_channels = ch(rng) + 4;
    spec.mid_channels = std::uniform_int_distribution<int>(1, spec.out_channels)(rng);
    spec.spatial_stride = 1 + trial % 2;
    spec.temporal_stride = 1 + (trial / 2) % 2;
    spec.channel_separated = trial % 3 != 0;
    const Bottleneck block(spec);
    EXPECT_EQ(count_parameters(block), bottleneck_parameter_count(spec, true));
  }
}

TEST(Bottleneck, ZeroBranchGivesRelu) {
  Bottleneck block(BottleneckSpec{6, 2, 6, 1, 1, true});
  std::mt19937_64 rng(10);
  block.initialize(rng);
  zero_conv_weights(block);
  ASSERT_FALSE(block.has_projection());
  const Tensor x = test::random_tensor(6, {2, 4, 4}, rng);
  const Tensor y = csn_bottleneck_forward(block, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], std::max(0.0, x.values()[i]));
}

TEST(Bottleneck, SpatialStrideHalvesExtent) {
  Bottleneck block(BottleneckSpec{8, 4, 16, 2, 1, true});
  std::mt19937_64 rng(11);
  block.initialize(rng);
  EXPECT_TRUE(block.has_projection());
  const Tensor y = csn_bottleneck_forward(block, test::random_tensor(8, {8, 32, 32}, rng));
  EXPECT_EQ(y.extent(), (Dim3{8, 16, 16}));
  EXPECT_EQ(y.channels(), 16);
}

TEST(Bottleneck, ChannelMismatchIsShapeError) {
  const Bottleneck block(BottleneckSpec{8, 4, 16, 1, 1, true});
  EXPECT_THROW(csn_bottleneck_forward(block, Tensor(4, {1, 4, 4})), ShapeError);
}

TEST(Bottleneck, InvalidSpecIsRejected) {
  EXPECT_THROW((BottleneckSpec{8, 32, 16, 1, 1, true}.validate()), ConfigError);
  EXPECT_THROW((BottleneckSpec{8, 4, 16, 3, 1, true}.validate()), ConfigError);
}

}  // namespace
}  // namespace vsod
