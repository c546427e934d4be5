#include "vsod/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "vsod/errors.hpp"

namespace vsod {

void ClipScheduleConfig::validate() const {
  if (clip_length < 1) throw ConfigError(fmt::format("clip length must be positive, got {}", clip_length));
  if (overlap < 0) throw ConfigError(fmt::format("overlap must be non-negative, got {}", overlap));
  if (overlap >= clip_length) {
    throw ConfigError(fmt::format("overlap must be < clip length (overlap {}, clip length {})", overlap, clip_length));
  }
}

std::vector<WindowPlan> plan_windows(int length, const ClipScheduleConfig& cfg) {
  cfg.validate();
  if (length < 1) throw InvalidArgument(fmt::format("video length must be positive, got {}", length));
  const int step = cfg.clip_length - cfg.overlap;
  std::vector<WindowPlan> plans;
  for (int start = 0;; start += step) {
    const int pad = std::max(0, start + cfg.clip_length - length);
    plans.push_back({start, cfg.clip_length, pad});
    if (start + cfg.clip_length >= length) break;
  }
  return plans;
}

ProbabilityMaps merge_window_probabilities(const std::vector<WindowPlan>& plans,
                                           const std::vector<ProbabilityMaps>& window_probs) {
  if (plans.empty()) throw InvalidArgument("no windows to merge");
  if (plans.size() != window_probs.size()) {
    throw InvalidArgument(fmt::format("{} plans but {} probability blocks", plans.size(), window_probs.size()));
  }
  const int height = window_probs.front().height();
  const int width = window_probs.front().width();
  int length = 0;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    const auto& w = window_probs[i];
    if (w.frames() != p.length || w.height() != height || w.width() != width) {
      throw InvalidArgument(fmt::format("window {} has shape {} but plan expects {} frames of {}x{}", i,
                                        to_string(w.extent()), p.length, height, width));
    }
    if (p.start < 0 || p.pad_count < 0 || p.pad_count >= p.length) {
      throw InvalidArgument(fmt::format("window {} has an invalid plan", i));
    }
    length = std::max(length, p.start + p.valid_frames());
  }
  const std::size_t frame_size = static_cast<std::size_t>(height) * width;
  std::vector<double> sum(frame_size * static_cast<std::size_t>(length), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(length), 0);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    auto src = window_probs[i].values();
    for (int k = 0; k < p.valid_frames(); ++k) {
      const auto f = static_cast<std::size_t>(p.start + k);
      ++counts[f];
      const double* s = src.data() + static_cast<std::size_t>(k) * frame_size;
      double* d = sum.data() + f * frame_size;
      for (std::size_t j = 0; j < frame_size; ++j) d[j] += s[j];
    }
  }
  for (std::size_t f = 0; f < counts.size(); ++f) {
    if (counts[f] == 0) throw InvalidArgument(fmt::format("frame {} is not covered by any window", f));
    double* d = sum.data() + f * frame_size;
    const auto c = static_cast<double>(counts[f]);
    for (std::size_t j = 0; j < frame_size; ++j) d[j] /= c;
  }
  return ProbabilityMaps(length, height, width, std::move(sum), std::move(counts));
}

int worst_case_latency(const ClipScheduleConfig& cfg) {
  cfg.validate();
  return cfg.clip_length - cfg.overlap - 1;
}

TrainingSampleSpec sample_training_clip_at(int length, int clip_length, int max_span, int start,
                                           std::mt19937_64& rng) {
  if (clip_length < 1) throw ConfigError(fmt::format("clip length must be positive, got {}", clip_length));
  if (max_span < 1) throw ConfigError(fmt::format("max span must be positive, got {}", max_span));
  if (length < 1) throw InvalidArgument(fmt::format("video length must be positive, got {}", length));
  if (start < 0 || start >= length) throw InvalidArgument(fmt::format("start {} outside [0, {})", start, length));

  TrainingSampleSpec spec{start, length, max_span, {}};
  spec.indices.reserve(static_cast<std::size_t>(clip_length));
  spec.indices.push_back(start);

  const int last = std::min(start + max_span - 1, length - 1);
  std::vector<int> pool;
  for (int f = start + 1; f <= last; ++f) pool.push_back(f);
  const auto wanted = static_cast<std::size_t>(clip_length - 1);
  if (pool.size() > wanted) {
    // Partial Fisher-Yates: the first `wanted` entries become a uniform sample.
    for (std::size_t i = 0; i < wanted; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(wanted);
  }
  std::sort(pool.begin(), pool.end());
  spec.indices.insert(spec.indices.end(), pool.begin(), pool.end());
  while (spec.indices.size() < static_cast<std::size_t>(clip_length)) spec.indices.push_back(spec.indices.back());
  return spec;
}

TrainingSampleSpec sample_training_clip(int length, int clip_length, int max_span, std::mt19937_64& rng) {
  if (length < 1) throw InvalidArgument(fmt::format("video length must be positive, got {}", length));
  std::uniform_int_distribution<int> start(0, length - 1);
  const int t = start(rng);
  return sample_training_clip_at(length, clip_length, max_span, t, rng);
}

MaskSequence binarize(const ProbabilityMaps& probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidArgument(fmt::format("threshold {} outside (0, 1)", threshold));
  }
  std::vector<std::uint8_t> out(probs.values().size());
  std::transform(probs.values().begin(), probs.values().end(), out.begin(),
                 [threshold](double p) { return static_cast<std::uint8_t>(p > threshold ? 1 : 0); });
  return MaskSequence(probs.frames(), probs.height(), probs.width(), std::move(out));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::pair<ProbabilityMaps, MaskSequence> segment_video(const SegmentationNetwork& model, const VideoTensor& frames,
                                                       const ClipScheduleConfig& cfg, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidArgument(fmt::format("threshold {} outside (0, 1)", threshold));
  }
  const auto plans = plan_windows(frames.frames(), cfg);
  std::vector<ProbabilityMaps> window_probs;
  window_probs.reserve(plans.size());
  for (const auto& plan : plans) {
    const VideoTensor clip = pad_clip_to_length(frames.slice(plan.start, plan.valid_frames()), plan.length);
    const Tensor logits = model.foreground_logits(clip);
    std::vector<double> probs(logits.size());
    std::transform(logits.values().begin(), logits.values().end(), probs.begin(), sigmoid);
    window_probs.emplace_back(plan.length, frames.height(), frames.width(), std::move(probs),
                              std::vector<int>(static_cast<std::size_t>(plan.length), 1));
  }
  ProbabilityMaps merged = merge_window_probabilities(plans, window_probs);
  MaskSequence masks = binarize(merged, threshold);
  return {std::move(merged), std::move(masks)};
}

}  // namespace vsod
