#include <gtest/gtest.h>

#include <cmath>

#include "test_common.hpp"
#include "vsod/errors.hpp"
#include "vsod/metrics.hpp"

namespace vsod {
namespace {

double jaccard_oracle(const BinaryMask& p, const BinaryMask& g) {
  int inter = 0, uni = 0;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      inter += p.at(y, x) && g.at(y, x);
      uni += p.at(y, x) || g.at(y, x);
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double fmeasure_oracle(const BinaryMask& p, const BinaryMask& g, double b2 = 1.0) {
  int tp = 0, fp = 0, fn = 0;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      tp += p.at(y, x) && g.at(y, x);
      fp += p.at(y, x) && !g.at(y, x);
      fn += !p.at(y, x) && g.at(y, x);
    }
  if (tp + fp == 0 && tp + fn == 0) return 1.0;
  if (tp + fp == 0 || tp + fn == 0) return 0.0;
  const double prec = static_cast<double>(tp) / (tp + fp), rec = static_cast<double>(tp) / (tp + fn);
  if (prec + rec == 0.0) return 0.0;
  return (1 + b2) * prec * rec / (b2 * prec + rec);
}

double mae_oracle(const FloatMap& p, const BinaryMask& g) {
  double s = 0.0;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) s += std::abs(p.at(y, x) - g.at(y, x));
  return s / (p.height * p.width);
}

bool on_contour(const BinaryMask& m, int y, int x) {
  if (!m.at(y, x)) return false;
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const int yy = y + dy[k], xx = x + dx[k];
    if (yy < 0 || xx < 0 || yy >= m.height || xx >= m.width || !m.at(yy, xx)) return true;
  }
  return false;
}

double matched_fraction(const BinaryMask& a, const BinaryMask& b, int r, int& count) {
  int hit = 0;
  count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (!on_contour(a, y, x)) continue;
      ++count;
      bool found = false;
      for (int v = 0; v < b.height && !found; ++v)
        for (int u = 0; u < b.width && !found; ++u)
          found = on_contour(b, v, u) && (v - y) * (v - y) + (u - x) * (u - x) <= r * r;
      hit += found;
    }
  return count ? static_cast<double>(hit) / count : 0.0;
}

double boundary_oracle(const BinaryMask& p, const BinaryMask& g, int r) {
  int np = 0, ng = 0;
  const double prec = matched_fraction(p, g, r, np);
  const double rec = matched_fraction(g, p, r, ng);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  return prec + rec == 0.0 ? 0.0 : 2 * prec * rec / (prec + rec);
}

TEST(Jaccard, WorkedExamples) {
  const BinaryMask top = test::rect_mask(4, 4, 0, 0, 2, 4);
  const BinaryMask left = test::rect_mask(4, 4, 0, 0, 4, 2);
  EXPECT_EQ(region_jaccard(top, top), 1.0);
  EXPECT_DOUBLE_EQ(region_jaccard(top, left), 1.0 / 3.0);
  EXPECT_EQ(region_jaccard(top, test::rect_mask(4, 4, 2, 0, 4, 4)), 0.0);
  EXPECT_EQ(region_jaccard(BinaryMask(4, 4), BinaryMask(4, 4)), 1.0);
  EXPECT_THROW(region_jaccard(top, BinaryMask(4, 5)), InvalidArgument);
}

TEST(SaliencyF, WorkedExamples) {
  const BinaryMask half = test::rect_mask(4, 4, 0, 0, 2, 4);
  EXPECT_EQ(saliency_f_measure(half, half), 1.0);
  EXPECT_DOUBLE_EQ(saliency_f_measure(BinaryMask(4, 4, 1), half), 2.0 / 3.0);
  EXPECT_EQ(saliency_f_measure(half, test::rect_mask(4, 4, 2, 0, 4, 4)), 0.0);
  EXPECT_EQ(saliency_f_measure(BinaryMask(4, 4), BinaryMask(4, 4)), 1.0);
  EXPECT_EQ(saliency_f_measure(BinaryMask(4, 4), half), 0.0);
  EXPECT_THROW(saliency_f_measure(half, BinaryMask(3, 4)), InvalidArgument);
  EXPECT_THROW(saliency_f_measure(half, half, 0.0), InvalidArgument);
}

TEST(Mae, WorkedExamples) {
  const BinaryMask m = test::rect_mask(4, 4, 1, 1, 3, 3);
  EXPECT_EQ(mean_absolute_error(m, m), 0.0);
  EXPECT_EQ(mean_absolute_error(BinaryMask(4, 4, 1), BinaryMask(4, 4)), 1.0);
  EXPECT_EQ(mean_absolute_error(FloatMap(4, 4, 0.25), BinaryMask(4, 4)), 0.25);
  EXPECT_THROW(mean_absolute_error(FloatMap(4, 4, 1.5), BinaryMask(4, 4)), InvalidArgument);
  EXPECT_THROW(mean_absolute_error(FloatMap(4, 3), BinaryMask(4, 4)), InvalidArgument);
}

TEST(Metrics, MatchLoopOraclesOnRandomMasks) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = u(rng);
    const BinaryMask a = test::random_mask(8, 8, rng, p), b = test::random_mask(8, 8, rng, u(rng));
    FloatMap f(8, 8);
    for (double& v : f.data) v = u(rng);
    ASSERT_NEAR(region_jaccard(a, b), jaccard_oracle(a, b), 1e-12);
    ASSERT_EQ(region_jaccard(a, b), region_jaccard(b, a));
    ASSERT_NEAR(saliency_f_measure(a, b), fmeasure_oracle(a, b), 1e-12);
    ASSERT_NEAR(saliency_f_measure(a, b, 0.3), fmeasure_oracle(a, b, 0.3), 1e-12);
    ASSERT_NEAR(mean_absolute_error(f, b), mae_oracle(f, b), 1e-12);
    ASSERT_NEAR(mean_absolute_error(a, b), mae_oracle(to_float_map(a), b), 1e-12);
    for (double v : {region_jaccard(a, b), saliency_f_measure(a, b), mean_absolute_error(f, b)}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, BoundaryMatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const BinaryMask a = test::random_mask(9, 11, rng, 0.6), b = test::random_mask(9, 11, rng, 0.6);
    const int r = 1 + trial % 3;
    ASSERT_NEAR(boundary_f_measure(a, b, {r}), boundary_oracle(a, b, r), 1e-12) << trial;
  }
}

TEST(Metrics, FlippingFalsePositiveNeverLowersPrecision) {
  std::mt19937_64 rng(3);
  const auto precision = [](const BinaryMask& p, const BinaryMask& g) {
    int tp = 0, pp = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      tp += p.data[i] && g.data[i];
      pp += p.data[i];
    }
    return pp ? static_cast<double>(tp) / pp : 0.0;
  };
  for (int trial = 0; trial < 300; ++trial) {
    BinaryMask p = test::random_mask(8, 8, rng), g = test::random_mask(8, 8, rng);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      if (p.data[i] && !g.data[i]) {
        const double before = precision(p, g), f_before = saliency_f_measure(p, g);
        p.data[i] = 0;
        EXPECT_GE(precision(p, g), before);
        EXPECT_GE(saliency_f_measure(p, g), f_before);
        break;
      }
    }
  }
}

TEST(Boundary, WorkedExamples) {
  const BinaryMask sq = test::rect_mask(16, 16, 4, 4, 10, 10);
  EXPECT_EQ(boundary_f_measure(sq, sq), 1.0);
  const BinaryMask shifted = test::rect_mask(16, 16, 4, 5, 10, 11);
  for (int r : {1, 2, 3}) EXPECT_EQ(boundary_f_measure(shifted, sq, {r}), 1.0);
  const BinaryMask far = test::rect_mask(16, 16, 12, 12, 15, 15);
  EXPECT_EQ(boundary_f_measure(far, test::rect_mask(16, 16, 0, 0, 3, 3), {1}), 0.0);
  EXPECT_EQ(boundary_f_measure(BinaryMask(16, 16), BinaryMask(16, 16)), 1.0);
  EXPECT_EQ(boundary_f_measure(sq, BinaryMask(16, 16)), 0.0);
  EXPECT_THROW(boundary_f_measure(sq, BinaryMask(16, 15)), InvalidArgument);
}

TEST(Boundary, SelfMatchForRandomMasks) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const BinaryMask m = test::random_mask(12, 10, rng, 0.4);
    if (m.area() == 0) continue;
    EXPECT_EQ(boundary_f_measure(m, m), 1.0);
  }
}

TEST(Boundary, DefaultRadius) {
  EXPECT_EQ(BoundaryMatchConfig{}.radius_for(480, 854), 8);
  EXPECT_EQ(BoundaryMatchConfig{}.radius_for(32, 32), 1);
  EXPECT_EQ(BoundaryMatchConfig{5}.radius_for(480, 854), 5);
  EXPECT_THROW(BoundaryMatchConfig{0}.radius_for(32, 32), InvalidArgument);
}

TEST(Contour, BorderPixelsAreContour) {
  const BinaryMask full(3, 3, 1);
  const BinaryMask c = mask_contour(full);
  EXPECT_EQ(c.area(), 8u);
  EXPECT_EQ(c.at(1, 1), 0);
  const BinaryMask d = dilate_disk(test::rect_mask(7, 7, 3, 3, 4, 4), 2);
  EXPECT_EQ(d.area(), 13u);
}

std::vector<FloatMap> as_maps(const std::vector<BinaryMask>& masks) {
  std::vector<FloatMap> out;
  for (const auto& m : masks) out.push_back(to_float_map(m));
  return out;
}

TEST(EvaluateDavis, PerfectSequence) {
  std::mt19937_64 rng(5);
  std::vector<BinaryMask> gt;
  for (int i = 0; i < 4; ++i) gt.push_back(test::rect_mask(10, 10, i, i, i + 4, i + 5));
  const EvalReport r = evaluate_davis({{"a", as_maps(gt)}}, {{"a", gt}});
  EXPECT_EQ(r.protocol, "davis");
  EXPECT_EQ(*r.J_mean, 1.0);
  EXPECT_EQ(*r.F_mean, 1.0);
  EXPECT_EQ(*r.JF, 1.0);
  ASSERT_EQ(r.sequences.size(), 1u);
  EXPECT_EQ(r.sequences[0].frames_scored, 4u);
}

TEST(EvaluateDavis, SequenceLevelAveraging) {
  // Sequence a: one frame with J 0.4. Sequence b: two frames, both J 0.8.
  const BinaryMask g5 = test::rect_mask(1, 10, 0, 0, 1, 5);
  const BinaryMask p2 = test::rect_mask(1, 10, 0, 0, 1, 2);
  const BinaryMask p4 = test::rect_mask(1, 10, 0, 0, 1, 4);
  const EvalReport r = evaluate_davis({{"a", as_maps({p2})}, {"b", as_maps({p4, p4})}}, {{"a", {g5}}, {"b", {g5, g5}}});
  EXPECT_NEAR(*r.sequences[0].J, 0.4, 1e-15);
  EXPECT_NEAR(*r.sequences[1].J, 0.8, 1e-15);
  EXPECT_NEAR(*r.J_mean, 0.6, 1e-15);
  EXPECT_EQ(*r.JF, (*r.J_mean + *r.F_mean) / 2.0);
}

TEST(EvaluateDavis, MissingSequenceListsNames) {
  const std::vector<BinaryMask> g{BinaryMask(2, 2)};
  try {
    evaluate_davis({{"a", as_maps(g)}}, {{"a", g}, {"bear", g}, {"cows", g}});
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("bear"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("cows"), std::string::npos);
  }
}

TEST(EvaluateDavis, FirstLastExclusionAndThreshold) {
  std::vector<BinaryMask> gt(4, test::rect_mask(6, 6, 1, 1, 4, 4));
  std::vector<FloatMap> pred = as_maps(gt);
  pred[0] = FloatMap(6, 6, 0.0);
  pred[3] = FloatMap(6, 6, 0.0);
  DavisOptions opts;
  EXPECT_LT(*evaluate_davis({{"s", pred}}, {{"s", gt}}, opts).J_mean, 1.0);
  opts.exclude_first_last = true;
  const EvalReport r = evaluate_davis({{"s", pred}}, {{"s", gt}}, opts);
  EXPECT_EQ(*r.J_mean, 1.0);
  EXPECT_EQ(r.sequences[0].frames_scored, 2u);
  std::vector<FloatMap> soft(4, FloatMap(6, 6, 0.0));
  for (auto& f : soft)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x) f.at(y, x) = 0.6;
  DavisOptions high;
  high.threshold = 0.7;
  EXPECT_EQ(*evaluate_davis({{"s", soft}}, {{"s", gt}}).J_mean, 1.0);
  EXPECT_EQ(*evaluate_davis({{"s", soft}}, {{"s", gt}}, high).J_mean, 0.0);
}

TEST(EvaluateSaliency, SparseFramesOnly) {
  std::vector<std::optional<BinaryMask>> gt(40);
  gt[0] = test::rect_mask(5, 5, 0, 0, 2, 5);
  gt[20] = test::rect_mask(5, 5, 1, 1, 4, 4);
  std::vector<FloatMap> pred(40, FloatMap(5, 5, 0.0));
  pred[0] = to_float_map(*gt[0]);
  pred[20] = to_float_map(*gt[20]);
  const EvalReport r = evaluate_saliency({{"s", pred}}, {{"s", gt}});
  EXPECT_EQ(r.protocol, "saliency");
  EXPECT_EQ(r.sequences[0].frames_scored, 2u);
  EXPECT_EQ(*r.F_measure, 1.0);
  EXPECT_EQ(*r.MAE, 0.0);
  EXPECT_FALSE(r.J_mean.has_value());
}

TEST(EvaluateSaliency, DenseMatchesDavisFrameSet) {
  std::mt19937_64 rng(6);
  std::vector<BinaryMask> gt;
  std::vector<std::optional<BinaryMask>> sparse;
  std::vector<FloatMap> pred;
  for (int i = 0; i < 5; ++i) {
    gt.push_back(test::random_mask(6, 6, rng));
    sparse.emplace_back(gt.back());
    pred.push_back(to_float_map(test::random_mask(6, 6, rng)));
  }
  EXPECT_EQ(evaluate_saliency({{"s", pred}}, {{"s", sparse}}).sequences[0].frames_scored,
            evaluate_davis({{"s", pred}}, {{"s", gt}}).sequences[0].frames_scored);
}

TEST(EvaluateSaliency, RawMaeAndErrors) {
  std::vector<std::optional<BinaryMask>> gt{BinaryMask(2, 2)};
  const std::vector<FloatMap> pred{FloatMap(2, 2, 0.25)};
  SaliencyOptions raw;
  raw.binarize_for_mae = false;
  EXPECT_EQ(*evaluate_saliency({{"s", pred}}, {{"s", gt}}).MAE, 0.0);
  EXPECT_EQ(*evaluate_saliency({{"s", pred}}, {{"s", gt}}, raw).MAE, 0.25);
  std::vector<std::optional<BinaryMask>> none(3);
  EXPECT_THROW(evaluate_saliency({{"s", std::vector<FloatMap>(3, FloatMap(2, 2))}}, {{"s", none}}), InvalidArgument);
}

TEST(Report, JsonAndTable) {
  EvalReport r;
  r.protocol = "davis";
  r.J_mean = 0.5;
  r.F_mean = 0.25;
  r.JF = 0.375;
  r.sequences.push_back({"seq", 3, 0.5, 0.25, std::nullopt, std::nullopt});
  const std::string json = report_to_json(r);
  EXPECT_EQ(json.find("\"protocol\": \"davis\""), 4u);
  EXPECT_NE(json.find("\"JF\": 0.375"), std::string::npos);
  EXPECT_EQ(json.find("MAE"), std::string::npos);
  EXPECT_EQ(json, report_to_json(r));
  const std::string table = report_to_table(r);
  EXPECT_NE(table.find("seq"), std::string::npos);
  EXPECT_NE(table.find("mean"), std::string::npos);
}

}  // namespace
}  // namespace vsod
