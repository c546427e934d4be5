#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "vsod/core_types.hpp"
#include "vsod/network.hpp"

namespace vsod {

struct ClipScheduleConfig {
  int clip_length = 8;  // T_c
  int overlap = 3;      // T_o

  void validate() const;
  /// Dense (online) mode: overlap = clip_length - 1.
  static ClipScheduleConfig dense(int clip_length) { return {clip_length, clip_length - 1}; }

  friend bool operator==(const ClipScheduleConfig&, const ClipScheduleConfig&) = default;
};

struct WindowPlan {
  int start = 0;
  int length = 0;
  int pad_count = 0;  // trailing copies of the last frame in the final window

  int valid_frames() const noexcept { return length - pad_count; }
  friend bool operator==(const WindowPlan&, const WindowPlan&) = default;
};

/// Windows of clip_length frames starting at 0 and advancing by
/// clip_length - overlap until frame L - 1 is covered. The last window is
/// padded with copies of the final frame when it runs past the video.
std::vector<WindowPlan> plan_windows(int length, const ClipScheduleConfig& cfg);

/// Averages window predictions per frame, ignoring padded positions.
ProbabilityMaps merge_window_probabilities(const std::vector<WindowPlan>& plans,
                                           const std::vector<ProbabilityMaps>& window_probs);

/// Frames a new frame may wait before its first window completes:
/// clip_length - overlap - 1.
int worst_case_latency(const ClipScheduleConfig& cfg);

struct TrainingSampleSpec {
  int start = 0;       // t
  int length = 0;      // L
  int max_span = 32;   // S
  std::vector<int> indices;
};

/// Draws a training clip from a video of `length` frames: a uniform start
/// t, then clip_length - 1 distinct frames from (t, min(t + S - 1, L - 1)]
/// in ascending order, padded by repeating the last index when the range is
/// too short.
TrainingSampleSpec sample_training_clip(int length, int clip_length, int max_span, std::mt19937_64& rng);

/// As sample_training_clip but with a fixed start frame.
TrainingSampleSpec sample_training_clip_at(int length, int clip_length, int max_span, int start,
                                           std::mt19937_64& rng);

/// mask = 1 where prob > threshold (strict), else 0.
MaskSequence binarize(const ProbabilityMaps& probs, double threshold);

double sigmoid(double x);

/// Runs the network on every planned window of a normalized video, merges
/// the sigmoid probabilities and thresholds them.
std::pair<ProbabilityMaps, MaskSequence> segment_video(const SegmentationNetwork& model, const VideoTensor& frames,
                                                       const ClipScheduleConfig& cfg, double threshold = 0.5);

}  // namespace vsod
