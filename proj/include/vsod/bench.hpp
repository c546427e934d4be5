#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "vsod/network.hpp"

namespace vsod {

struct BenchOptions {
  int warmup = 3;
  int iterations = 10;
  std::uint64_t seed = 0;
  /// Memory budget in bytes; defaults to MemAvailable from the system.
  std::optional<std::size_t> memory_limit;
};

struct BenchReport {
  std::size_t parameter_count = 0;
  double seconds_per_frame = 0.0;  // median over timed iterations
  Dim3 clip{};
  std::string device;
  int warmup = 0;
  int iterations = 0;
  std::size_t estimated_bytes = 0;
};

/// Selected compute device from the VSOD_DEVICE environment variable;
/// only "cpu" (the default) is supported.
std::string selected_device();

/// Bytes of memory currently available, when the platform reports it.
std::optional<std::size_t> available_memory_bytes();

/// Median wall-clock seconds per frame of an end-to-end forward pass on a
/// random normalized clip of `frames` x `height` x `width`. Throws
/// ResourceError when the estimated footprint exceeds the memory budget.
BenchReport bench_runtime(const SegmentationNetwork& model, int height, int width, int frames,
                          const BenchOptions& options = {});

std::string format_bench_report(const BenchReport& report);

}  // namespace vsod
