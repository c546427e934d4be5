#include <gtest/gtest.h>

#include <cstdlib>
#include <string>

#include "test_common.hpp"
#include "vsod/bench.hpp"
#include "vsod/errors.hpp"
#include "vsod/layers.hpp"

namespace vsod {
namespace {

TEST(Bench, ReportsParameterCountAndPositiveTiming) {
  const SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network(), 1);
  const BenchReport r = bench_runtime(net, 32, 32, 2);
  EXPECT_EQ(r.parameter_count, count_parameters(net));
  EXPECT_GT(r.seconds_per_frame, 0.0);
  EXPECT_EQ(r.clip, (Dim3{2, 32, 32}));
  EXPECT_EQ(r.warmup, 3);
  EXPECT_EQ(r.iterations, 10);
  EXPECT_NE(r.device.find("cpu"), std::string::npos);
  const std::string text = format_bench_report(r);
  EXPECT_NE(text.find("seconds / frame"), std::string::npos);
  EXPECT_NE(text.find(std::to_string(r.parameter_count)), std::string::npos);
}

TEST(Bench, LargerResolutionIsSlower) {
  const SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network(), 1);
  const double small = bench_runtime(net, 64, 64, 1).seconds_per_frame;
  const double large = bench_runtime(net, 256, 256, 1).seconds_per_frame;
  EXPECT_LT(small, large);
}

TEST(Bench, EnforcesMinimumIterations) {
  const SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network(), 1);
  BenchOptions opts;
  opts.warmup = 2;
  EXPECT_THROW(bench_runtime(net, 32, 32, 1, opts), InvalidArgument);
  opts.warmup = 3;
  opts.iterations = 9;
  EXPECT_THROW(bench_runtime(net, 32, 32, 1, opts), InvalidArgument);
  EXPECT_THROW(bench_runtime(net, 0, 32, 1), InvalidArgument);
}

TEST(Bench, MemoryBudgetNamesResolution) {
  const SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network(), 1);
  BenchOptions opts;
  opts.memory_limit = 1024;
  try {
    bench_runtime(net, 480, 854, 8, opts);
    FAIL() << "budget not enforced";
  } catch (const ResourceError& e) {
    EXPECT_NE(std::string(e.what()).find("resolution"), std::string::npos) << e.what();
  }
  EXPECT_GT(estimate_inference_bytes(net.config(), {8, 480, 854}), estimate_inference_bytes(net.config(), {8, 64, 64}));
}

TEST(Bench, DeviceSelection) {
  ::unsetenv("VSOD_DEVICE");
  EXPECT_EQ(selected_device(), "cpu");
  ::setenv("VSOD_DEVICE", "cuda", 1);
  EXPECT_THROW(selected_device(), ConfigError);
  const SegmentationNetwork net = SegmentationNetwork::build(test::tiny_network(), 1);
  EXPECT_THROW(bench_runtime(net, 32, 32, 1), ConfigError);
  ::setenv("VSOD_DEVICE", "cpu", 1);
  EXPECT_EQ(selected_device(), "cpu");
  ::unsetenv("VSOD_DEVICE");
}

}  // namespace
}  // namespace vsod
