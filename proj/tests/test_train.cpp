#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_common.hpp"
#include "vsod/errors.hpp"
#include "vsod/pipeline.hpp"
#include "vsod/train.hpp"

namespace vsod {
namespace {

MaskSequence random_masks(int t, int h, int w, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.4);
  std::vector<std::uint8_t> d(static_cast<std::size_t>(t) * h * w);
  for (auto& v : d) v = b(rng);
  return MaskSequence(t, h, w, d);
}

double bce_oracle(double x, int y) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  return -(y ? std::log(p) : std::log(1.0 - p));
}

TEST(Loss, ZeroLogitsGiveLn2) {
  std::mt19937_64 rng(1);
  const LossResult r = pixel_cross_entropy(Tensor(1, {2, 3, 4}), random_masks(2, 3, 4, rng));
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
}

TEST(Loss, LargeLogitIsStable) {
  Tensor logits(1, {1, 1, 1}, 20.0);
  const LossResult r = pixel_cross_entropy(logits, MaskSequence(1, 1, 1, 1));
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-20.0)), 1e-22);
  logits.values()[0] = 800.0;
  EXPECT_EQ(pixel_cross_entropy(logits, MaskSequence(1, 1, 1, 1)).loss, 0.0);
  EXPECT_NEAR(pixel_cross_entropy(logits, MaskSequence(1, 1, 1, 0)).loss, 800.0, 1e-9);
}

TEST(Loss, MatchesNaiveFormulaAndGradient) {
  std::mt19937_64 rng(2);
  const Tensor logits = test::random_tensor(1, {2, 3, 3}, rng, 3.0);
  const MaskSequence gt = random_masks(2, 3, 3, rng);
  const LossResult r = pixel_cross_entropy(logits, gt);
  double expected = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) expected += bce_oracle(logits.values()[i], gt.values()[i]);
  EXPECT_NEAR(r.loss, expected / logits.size(), 1e-12);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.values()[i]));
    EXPECT_NEAR(r.grad.values()[i], (p - gt.values()[i]) / logits.size(), 1e-15);
  }
}

TEST(Loss, PermutationInvariantAndNonNegative) {
  std::mt19937_64 rng(3);
  const Tensor logits = test::random_tensor(1, {1, 4, 4}, rng, 2.0);
  const MaskSequence gt = random_masks(1, 4, 4, rng);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pl(1, {1, 4, 4});
  std::vector<std::uint8_t> pg(16);
  for (std::size_t i = 0; i < 16; ++i) {
    pl.values()[i] = logits.values()[perm[i]];
    pg[i] = gt.values()[perm[i]];
  }
  const double a = pixel_cross_entropy(logits, gt).loss;
  EXPECT_NEAR(a, pixel_cross_entropy(pl, MaskSequence(1, 4, 4, pg)).loss, 1e-14);
  EXPECT_GE(a, 0.0);
}

TEST(Loss, NearZeroOnlyWhenPredictionMatches) {
  std::mt19937_64 rng(4);
  const MaskSequence gt = random_masks(1, 4, 4, rng);
  Tensor logits(1, {1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) logits.values()[i] = gt.values()[i] ? 60.0 : -60.0;
  EXPECT_LT(pixel_cross_entropy(logits, gt).loss, 1e-25);
  logits.values()[0] *= -1.0;
  EXPECT_GT(pixel_cross_entropy(logits, gt).loss, 1.0);
}

TEST(Loss, Errors) {
  EXPECT_THROW(pixel_cross_entropy(Tensor(1, {1, 2, 2}), MaskSequence(1, 2, 3)), InvalidArgument);
  EXPECT_THROW(pixel_cross_entropy(Tensor(2, {1, 2, 2}), MaskSequence(1, 2, 2)), InvalidArgument);
  Tensor bad(1, {1, 1, 2});
  bad.values()[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(pixel_cross_entropy(bad, MaskSequence(1, 1, 2)), NumericError);
  bad.values()[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(pixel_cross_entropy(bad, MaskSequence(1, 1, 2)), NumericError);
}

TEST(Loss, TwoClassEqualsBinaryOnLogitDifference) {
  std::mt19937_64 rng(5);
  const Tensor head = test::random_tensor(2, {2, 3, 3}, rng, 2.0);
  const MaskSequence gt = random_masks(2, 3, 3, rng);
  const LossResult two = two_class_cross_entropy(head, gt);
  const LossResult bin = pixel_cross_entropy(foreground_logits(head), gt);
  EXPECT_NEAR(two.loss, bin.loss, 1e-14);
  for (std::size_t i = 0; i < bin.grad.size(); ++i) {
    EXPECT_NEAR(two.grad.values()[bin.grad.size() + i], bin.grad.values()[i], 1e-15);
    EXPECT_NEAR(two.grad.values()[i], -bin.grad.values()[i], 1e-15);
  }
  EXPECT_EQ(compute_loss(LossKind::TwoClassCrossEntropy, head, gt).loss, two.loss);
  EXPECT_THROW(two_class_cross_entropy(Tensor(1, {2, 3, 3}), gt), InvalidArgument);
}

TEST(Schedule, KnownValues) {
  EXPECT_EQ(lr_at_epoch(1e-5, 0.95, 0), 1e-5);
  for (int e = 0; e < 10; ++e) EXPECT_EQ(lr_at_epoch(1e-5, 1.0, e), 1e-5);
  EXPECT_NEAR(lr_at_epoch(1e-5, 0.5, 3), 1.25e-6, 1e-21);
  EXPECT_THROW(lr_at_epoch(1e-5, 0.5, -1), InvalidArgument);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig c;
  c.initial_lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.decay_gamma = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.decay_gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_train_stage("video"), TrainStage::Video);
  EXPECT_EQ(parse_loss_kind("two-class-cross-entropy"), LossKind::TwoClassCrossEntropy);
  EXPECT_THROW(parse_train_stage("audio"), ConfigError);
  EXPECT_THROW(parse_loss_kind("dice"), ConfigError);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  struct One {
    Parameter p = Parameter::filled({3}, 1.0);
    void visit_parameters(const std::string& prefix, const ParameterVisitor& fn) { fn(join_path(prefix, "p"), p); }
  } m;
  m.p.grad = {0.5, -2.0, 0.0};
  Adam adam;
  adam.step(m, 0.01);
  EXPECT_NEAR(m.p.value[0], 0.99, 1e-9);
  EXPECT_NEAR(m.p.value[1], 1.01, 1e-9);
  EXPECT_EQ(m.p.value[2], 1.0);
  EXPECT_EQ(adam.steps(), 1u);
  ASSERT_EQ(adam.moments().count("p"), 1u);
  EXPECT_NEAR(adam.moments().at("p").m[0], 0.05, 1e-15);
  EXPECT_NEAR(adam.moments().at("p").v[1], 0.004, 1e-15);
}

TEST(Adam, SkipsFrozenParameters) {
  struct Two {
    Parameter a = Parameter::filled({1}, 1.0);
    Parameter b = Parameter::filled({1}, 1.0, false);
    void visit_parameters(const std::string&, const ParameterVisitor& fn) {
      fn("a", a);
      fn("b", b);
    }
  } m;
  m.a.grad = {1.0};
  m.b.grad = {1.0};
  Adam adam;
  adam.step(m, 0.1);
  EXPECT_NE(m.a.value[0], 1.0);
  EXPECT_EQ(m.b.value[0], 1.0);
  EXPECT_EQ(adam.moments().count("b"), 0u);
}

std::vector<TrainingClip> random_training_clips(int n, Dim3 e, std::mt19937_64& rng) {
  std::vector<TrainingClip> clips;
  for (int i = 0; i < n; ++i) clips.push_back({test::random_clip(e.t, e.h, e.w, rng), random_masks(e.t, e.h, e.w, rng)});
  return clips;
}

TEST(TrainStage, SingleStepDescent) {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network({8, 8, 8, 8}), seed);
    std::mt19937_64 rng(seed + 100);
    const auto clips = random_training_clips(2, {4, 32, 32}, rng);
    const double before = evaluate_loss(net, clips, LossKind::BinaryCrossEntropy);
    FixedClipSource src(clips);
    TrainConfig cfg;
    cfg.initial_lr = 1e-5;
    cfg.epochs = 1;
    cfg.iterations_per_epoch = 1;
    cfg.batch_size = 2;
    cfg.clip_length = 4;
    cfg.seed = seed;
    train_stage(net, src, cfg);
    if (!(evaluate_loss(net, clips, LossKind::BinaryCrossEntropy) < before)) ++failures;
  }
  EXPECT_LE(failures, 1);
}

TEST(TrainStage, ScheduleWiringAndHistory) {
  SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network({8, 8, 8, 8}), 1);
  std::mt19937_64 rng(2);
  FixedClipSource src(random_training_clips(2, {2, 32, 32}, rng));
  TrainConfig cfg;
  cfg.initial_lr = 1e-4;
  cfg.decay_gamma = 0.5;
  cfg.epochs = 3;
  cfg.iterations_per_epoch = 2;
  cfg.batch_size = 1;
  cfg.clip_length = 2;
  std::vector<double> seen;
  int epochs_ended = 0;
  TrainHooks hooks;
  hooks.on_iteration = [&](int, double, double lr) { seen.push_back(lr); };
  hooks.on_epoch_end = [&](const EpochRecord& r, const SegmentationNetwork&, const Adam& adam) {
    ++epochs_ended;
    EXPECT_EQ(adam.steps(), static_cast<std::uint64_t>(2 * (r.epoch + 1)));
  };
  const TrainResult res = train_stage(net, src, cfg, hooks);
  ASSERT_EQ(seen.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(seen[i], lr_at_epoch(1e-4, 0.5, i / 2));
  EXPECT_EQ(epochs_ended, 3);
  ASSERT_EQ(res.history.size(), 3u);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(res.history[e].lr, lr_at_epoch(1e-4, 0.5, e));
    EXPECT_EQ(res.history[e].iterations, 2);
  }
  EXPECT_EQ(res.meta.epoch, 3);
  EXPECT_EQ(res.meta.fingerprint, net.architecture_fingerprint());
  EXPECT_EQ(res.meta.metrics.at("loss"), res.history.back().mean_loss);
}

TEST(TrainStage, DeterministicForSeed) {
  const auto run = [] {
    SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network({8, 8, 8, 8}), 4);
    std::vector<InstanceImage> images;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> u(0, 255);
    std::vector<std::uint8_t> px(24 * 24 * 3);
    for (auto& v : px) v = static_cast<std::uint8_t>(u(rng));
    images.push_back({"a", Video8(1, 24, 24, px), {test::rect_mask(24, 24, 5, 5, 15, 12)}});
    SyntheticImageSource src(images, {3, {}}, {});
    TrainConfig cfg;
    cfg.initial_lr = 1e-3;
    cfg.epochs = 2;
    cfg.iterations_per_epoch = 2;
    cfg.clip_length = 3;
    cfg.seed = 9;
    train_stage(net, src, cfg);
    std::vector<double> w;
    for_each_parameter(net, [&](const std::string&, const Parameter& p) { w.insert(w.end(), p.value.begin(), p.value.end()); });
    return w;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainStage, VideoStageWithOneFrameSequence) {
  SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network({8, 8, 8, 8}), 6);
  std::vector<std::uint8_t> px(32 * 32 * 3, 100);
  std::vector<AnnotatedVideo> videos{{"single", Video8(1, 32, 32, px), MaskSequence(1, 32, 32, 1)}};
  VideoSequenceSource src(videos, 4, 32, {});
  std::mt19937_64 rng(7);
  const TrainingClip c = src.sample(rng);
  EXPECT_EQ(c.clip.frames(), 4);
  EXPECT_EQ(c.masks.frames(), 4);
  TrainConfig cfg;
  cfg.stage = TrainStage::Video;
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 2;
  cfg.clip_length = 4;
  EXPECT_NO_THROW(train_stage(net, src, cfg));
}

TEST(TrainStage, NonFiniteLossAborts) {
  SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network({8, 8, 8, 8}), 7);
  net.decoder().head().bias().value[0] = std::numeric_limits<double>::quiet_NaN();
  std::mt19937_64 rng(8);
  FixedClipSource src(random_training_clips(1, {2, 32, 32}, rng));
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.clip_length = 2;
  EXPECT_THROW(train_stage(net, src, cfg), NumericError);
}

TEST(TrainStage, LossMustMatchHead) {
  SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network({8, 8, 8, 8}), 8);
  std::mt19937_64 rng(9);
  FixedClipSource src(random_training_clips(1, {2, 32, 32}, rng));
  TrainConfig cfg;
  cfg.loss = LossKind::TwoClassCrossEntropy;
  cfg.clip_length = 2;
  EXPECT_THROW(train_stage(net, src, cfg), ConfigError);
}

TEST(TrainStage, TwoClassHeadTrains) {
  NetworkConfig nc = test::tiny_network({8, 8, 8, 8});
  nc.decoder.head = HeadKind::Softmax2;
  SegmentationNetwork net = SegmentationNetwork::build(nc, 10);
  std::mt19937_64 rng(11);
  const auto clips = random_training_clips(1, {2, 32, 32}, rng);
  FixedClipSource src(clips);
  TrainConfig cfg;
  cfg.loss = LossKind::TwoClassCrossEntropy;
  cfg.initial_lr = 1e-3;
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 3;
  cfg.batch_size = 1;
  cfg.clip_length = 2;
  const double before = evaluate_loss(net, clips, cfg.loss);
  train_stage(net, src, cfg);
  EXPECT_LT(evaluate_loss(net, clips, cfg.loss), before);
}

TEST(Sources, GatherAndVideoSampling) {
  std::vector<std::uint8_t> px;
  for (int t = 0; t < 6; ++t)
    for (int i = 0; i < 4 * 4 * 3; ++i) px.push_back(static_cast<std::uint8_t>(t * 10));
  std::vector<std::uint8_t> mk;
  for (int t = 0; t < 6; ++t)
    for (int i = 0; i < 16; ++i) mk.push_back(t % 2);
  const Video8 frames(6, 4, 4, px);
  const VideoTensor norm = normalize_clip(frames, {});
  const VideoTensor g = gather_frames(norm, {1, 3, 3});
  EXPECT_EQ(g.slice(1, 1), norm.slice(3, 1));
  EXPECT_EQ(g.slice(2, 1), norm.slice(3, 1));
  EXPECT_THROW(gather_frames(norm, {6}), InvalidArgument);
  VideoSequenceSource src({{"v", frames, MaskSequence(6, 4, 4, mk)}}, 3, 32, {});
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    const TrainingClip c = src.sample(rng);
    ASSERT_EQ(c.clip.frames(), 3);
    for (int t = 0; t < 3; ++t) {
      // Each frame's constant value identifies its source index; the mask must follow it.
      const int index = static_cast<int>(std::lround(c.clip.at(t, 0, 0, 0) * 0.22803 * 255 + 0.43216 * 255)) / 10;
      EXPECT_EQ(c.masks.at(t, 0, 0), index % 2);
    }
  }
}

TEST(Overfit, TinyModelReachesTargetOnTwoClips) {
  SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network(), 7);
  const auto clips = test::overfit_clips();
  FixedClipSource src(clips);
  const TrainResult res = train_stage(net, src, test::overfit_train_config());
  ASSERT_EQ(res.history.size(), 20u);
  for (std::size_t e = 1; e < res.history.size(); ++e)
    EXPECT_LT(res.history[e].mean_loss, res.history[e - 1].mean_loss) << "epoch " << e;
  EXPECT_GE(test::mean_jaccard(net, clips), 0.9);
}

}  // namespace
}  // namespace vsod
