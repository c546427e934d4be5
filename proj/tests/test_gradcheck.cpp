#include <gtest/gtest.h>

#include "test_common.hpp"
#include "vsod/encoder.hpp"
#include "vsod/errors.hpp"
#include "vsod/gradcheck.hpp"
#include "vsod/network.hpp"

namespace vsod {
namespace {

TEST(Gradcheck, LinearOpIsExact) {
  std::mt19937_64 rng(1);
  Conv3d conv(ConvSpec{4, 3});
  conv.initialize(rng);
  ModuleOp<Conv3d> op(conv);
  EXPECT_LT(finite_difference_gradcheck(op, test::random_tensor(4, {2, 3, 3}, rng), 1e-4), 1e-10);
}

TEST(Gradcheck, DetectsAWrongGradient) {
  struct Broken {
    Tensor forward(const Tensor& x, Tape* tape) const {
      if (tape) tape->save(x);
      Tensor y = x;
      for (double& v : y.values()) v = v * v;
      return y;
    }
    Tensor backward(const Tensor& g, Tape& tape) {
      tape.restore();
      return g;  // should be 2 x g
    }
    void visit_parameters(const std::string&, const ParameterVisitor&) {}
  } broken;
  std::mt19937_64 rng(2);
  ModuleOp<Broken> op(broken);
  EXPECT_GT(finite_difference_gradcheck(op, test::random_tensor(1, {1, 3, 3}, rng), 1e-5), 1e-2);
}

TEST(Gradcheck, RejectsNonPositiveEps) {
  Conv3d conv(ConvSpec{1, 1});
  ModuleOp<Conv3d> op(conv);
  EXPECT_THROW(finite_difference_gradcheck(op, Tensor(1, {1, 1, 1}), 0.0), InvalidArgument);
}

TEST(Gradcheck, GC3DOnSmallTensor) {
  std::mt19937_64 rng(3);
  GC3D m(GC3DConfig{7, 4, 4});
  m.initialize(rng);
  ModuleOp<GC3D> op(m);
  const GradcheckResult r =
      finite_difference_gradcheck(op, {test::random_tensor(4, {2, 6, 6}, rng)}, 1e-5, {8, 3, true});
  EXPECT_LE(r.input_error, 1e-4);
  EXPECT_LE(r.parameter_error, 1e-4);
}

TEST(Gradcheck, GC3DWithBoundaryRefinement) {
  std::mt19937_64 rng(4);
  GC3D m(GC3DConfig{3, 2, 3, true});
  m.initialize(rng);
  ModuleOp<GC3D> op(m);
  EXPECT_LE(finite_difference_gradcheck(op, test::random_tensor(2, {2, 5, 5}, rng), 1e-6),
            1e-4);
}

TEST(Gradcheck, RF3DTwoInputs) {
  std::mt19937_64 rng(5);
  RF3D m(3, 2, 2);
  m.initialize(rng);
  RF3DOp op(m, {2, 2, 2});
  const GradcheckResult r = finite_difference_gradcheck(
      op, {test::random_tensor(3, {1, 3, 3}, rng), test::random_tensor(2, {2, 6, 6}, rng)}, 1e-6, {8, 5, true});
  EXPECT_LE(r.input_error, 1e-4);
  EXPECT_LE(r.parameter_error, 1e-4);
}

struct UpsampleRefineOp : DifferentiableOp {
  UpsampleRefine& m;
  explicit UpsampleRefineOp(UpsampleRefine& module) : m(module) {}
  Tensor forward(const std::vector<Tensor>& in, Tape* tape) override { return m.forward(in[0], in[1], {1, 2, 2}, tape); }
  std::vector<Tensor> backward(const Tensor& g, Tape& tape) override {
    auto [a, b] = m.backward(g, {1, 2, 2}, tape);
    return {a, b};
  }
  void visit_parameters(const std::string& p, const ParameterVisitor& fn) override { m.visit_parameters(p, fn); }
};

TEST(Gradcheck, UpsampleRefine) {
  std::mt19937_64 rng(6);
  UpsampleRefine m(3, 2, 2);
  m.initialize(rng);
  UpsampleRefineOp op(m);
  const GradcheckResult r = finite_difference_gradcheck(
      op, {test::random_tensor(3, {2, 3, 3}, rng), test::random_tensor(2, {2, 6, 6}, rng)}, 1e-6);
  EXPECT_LE(r.max_relative_error, 1e-4);
}

TEST(Gradcheck, Bottleneck) {
  std::mt19937_64 rng(7);
  Bottleneck block(BottleneckSpec{4, 2, 6, 2, 2, true});
  block.initialize(rng);
  // Non-trivial affine parameters so every path carries gradient.
  block.visit_parameters("", [&](const std::string& path, Parameter& p) {
    if (path.ends_with("gamma")) std::fill(p.value.begin(), p.value.end(), 0.8);
    if (path.ends_with("beta")) std::fill(p.value.begin(), p.value.end(), 0.1);
  });
  ModuleOp<Bottleneck> op(block);
  EXPECT_LE(finite_difference_gradcheck(op, test::random_tensor(4, {4, 6, 6}, rng), 1e-6), 1e-4);
}

// Whole-network parameter gradients; the clip is held fixed.
struct NetworkOp : DifferentiableOp {
  SegmentationNetwork& net;
  Tensor clip;
  NetworkOp(SegmentationNetwork& n, Tensor c) : net(n), clip(std::move(c)) {}
  Tensor forward(const std::vector<Tensor>&, Tape* tape) override { return net.forward(clip, tape); }
  std::vector<Tensor> backward(const Tensor& g, Tape& tape) override {
    net.backward(g, tape);
    return {};
  }
  void visit_parameters(const std::string& p, const ParameterVisitor& fn) override { net.visit_parameters(p, fn); }
};

class NetworkGradcheck : public ::testing::TestWithParam<std::pair<RefineKind, HeadKind>> {};

TEST_P(NetworkGradcheck, ParameterGradients) {
  NetworkConfig cfg = test::tiny_network({4, 4, 4, 4});
  cfg.encoder.base_width = 2;
  cfg.decoder.refine = GetParam().first;
  cfg.decoder.head = GetParam().second;
  SegmentationNetwork net = SegmentationNetwork::build(cfg, 8);
  std::mt19937_64 rng(9);
  // Zero betas leave exact zeros in front of ReLUs, where central differences see a kink;
  // a small eps keeps the remaining ReLU and max-pool kinks out of reach.
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  net.visit_parameters("", [&](const std::string& path, Parameter& p) {
    if (path.ends_with("beta")) for (double& v : p.value) v = u(rng);
    if (path.ends_with("gamma")) for (double& v : p.value) v = 1.0 + u(rng);
  });
  NetworkOp op(net, to_tensor(test::random_clip(4, 32, 32, rng)));
  const GradcheckResult r = finite_difference_gradcheck(op, {}, 1e-7, {4, 10, true});
  EXPECT_LE(r.parameter_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Variants, NetworkGradcheck,
                         ::testing::Values(std::pair{RefineKind::RF3D, HeadKind::Sigmoid},
                                           std::pair{RefineKind::Upsample, HeadKind::Softmax2}));

}  // namespace
}  // namespace vsod
