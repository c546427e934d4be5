#include "vsod/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "vsod/errors.hpp"
#include "vsod/layers.hpp"

namespace vsod {

std::string selected_device() {
  const char* env = std::getenv("VSOD_DEVICE");
  const std::string device = env && *env ? env : "cpu";
  if (device != "cpu") throw ConfigError(fmt::format("VSOD_DEVICE={} is not supported (only cpu)", device));
  return device;
}

std::optional<std::size_t> available_memory_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::size_t kb = 0;
  std::string unit;
  while (in >> key >> kb >> unit) {
    if (key == "MemAvailable:") return kb * 1024;
  }
  return std::nullopt;
}

BenchReport bench_runtime(const SegmentationNetwork& model, int height, int width, int frames,
                          const BenchOptions& options) {
  if (height < 1 || width < 1 || frames < 1) {
    throw InvalidArgument(fmt::format("bench clip {}x{}x{} must be positive", frames, height, width));
  }
  if (options.warmup < 3) throw InvalidArgument("bench needs at least 3 warm-up iterations");
  if (options.iterations < 10) throw InvalidArgument("bench needs at least 10 timed iterations");

  BenchReport report;
  report.clip = {frames, height, width};
  report.device = fmt::format("{} ({} hardware threads)", selected_device(), std::thread::hardware_concurrency());
  report.parameter_count = count_parameters(model);
  report.warmup = options.warmup;
  report.iterations = options.iterations;
  report.estimated_bytes = estimate_inference_bytes(model.config(), report.clip);

  const auto limit = options.memory_limit ? options.memory_limit : available_memory_bytes();
  if (limit && report.estimated_bytes > *limit) {
    throw ResourceError(fmt::format(
        "estimated {:.2f} GiB for a {}x{}x{} clip exceeds the {:.2f} GiB available; try a smaller --resolution",
        report.estimated_bytes / 1073741824.0, frames, height, width, *limit / 1073741824.0));
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor clip(3, report.clip);
  for (double& v : clip.values()) v = n(rng);

  for (int i = 0; i < options.warmup; ++i) model.forward(clip);
  std::vector<double> seconds;
  for (int i = 0; i < options.iterations; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor out = model.forward(clip);
    const auto stop = std::chrono::steady_clock::now();
    if (out.empty()) throw NumericError("bench forward produced no output");
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(seconds.begin(), seconds.end());
  const std::size_t m = seconds.size() / 2;
  const double median = seconds.size() % 2 ? seconds[m] : (seconds[m - 1] + seconds[m]) / 2.0;
  report.seconds_per_frame = median / frames;
  return report;
}

std::string format_bench_report(const BenchReport& r) {
  std::ostringstream out;
  out << fmt::format("parameters        {}\n", r.parameter_count);
  out << fmt::format("clip (T x H x W)  {} x {} x {}\n", r.clip.t, r.clip.h, r.clip.w);
  out << fmt::format("device            {}\n", r.device);
  out << fmt::format("warm-up / timed   {} / {}\n", r.warmup, r.iterations);
  out << fmt::format("estimated memory  {:.1f} MiB\n", r.estimated_bytes / 1048576.0);
  out << fmt::format("seconds / frame   {:.6f}\n", r.seconds_per_frame);
  return out.str();
}

}  // namespace vsod
