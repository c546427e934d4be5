#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsod/core_types.hpp"

namespace vsod {

struct BoundaryMatchConfig {
  /// Fixed radius in pixels; when unset, ceil(0.008 * image diagonal).
  std::optional<int> tolerance_radius;

  int radius_for(int height, int width) const;
};

/// |pred & gt| / |pred | gt|; 1.0 when both masks are empty.
double region_jaccard(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground pixels with at least one 4-neighbour in the background
/// (pixels outside the image count as background).
BinaryMask mask_contour(const BinaryMask& mask);

/// Pixels within Euclidean distance `radius` of any foreground pixel.
BinaryMask dilate_disk(const BinaryMask& mask, int radius);

/// Harmonic mean of contour precision and recall under a pixel tolerance.
/// Both contours empty gives 1.0; exactly one empty gives 0.0.
double boundary_f_measure(const BinaryMask& pred, const BinaryMask& gt, const BoundaryMatchConfig& cfg = {});

/// Per-pixel F-measure (1 + b2) P R / (b2 P + R) with b2 = 1 by default.
/// Both masks empty gives 1.0; otherwise an undefined P or R gives 0.0.
double saliency_f_measure(const BinaryMask& pred, const BinaryMask& gt, double beta_squared = 1.0);

/// Mean over pixels of |pred - gt|; pred values must lie in [0, 1].
double mean_absolute_error(const FloatMap& pred, const BinaryMask& gt);
double mean_absolute_error(const BinaryMask& pred, const BinaryMask& gt);

struct SequenceScore {
  std::string name;
  std::size_t frames_scored = 0;
  std::optional<double> J;
  std::optional<double> F;
  std::optional<double> F_measure;
  std::optional<double> MAE;

  friend bool operator==(const SequenceScore&, const SequenceScore&) = default;
};

struct EvalReport {
  std::string protocol;
  std::optional<double> J_mean;
  std::optional<double> F_mean;
  std::optional<double> JF;
  std::optional<double> F_measure;
  std::optional<double> MAE;
  std::vector<SequenceScore> sequences;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct DavisOptions {
  bool exclude_first_last = false;
  BoundaryMatchConfig boundary;
  double threshold = 0.5;
};

/// Per-sequence means of J and boundary F over frames, then the mean over
/// sequences; JF = (J_mean + F_mean) / 2. Predictions are probability maps
/// (binary masks pass through as 0/1) thresholded with a strict `>`.
EvalReport evaluate_davis(const std::map<std::string, std::vector<FloatMap>>& pred,
                          const std::map<std::string, std::vector<BinaryMask>>& gt, const DavisOptions& options = {});

struct SaliencyOptions {
  bool annotated_frames_only = true;
  double beta_squared = 1.0;
  /// Binarize predictions before MAE (default); otherwise raw probabilities.
  bool binarize_for_mae = true;
  double threshold = 0.5;
};

/// F-measure and MAE averaged over annotated frames, then over sequences.
/// Ground truth may be sparse: frames without annotation are nullopt.
EvalReport evaluate_saliency(const std::map<std::string, std::vector<FloatMap>>& pred,
                             const std::map<std::string, std::vector<std::optional<BinaryMask>>>& gt,
                             const SaliencyOptions& options = {});

BinaryMask threshold_map(const FloatMap& map, double threshold);

/// Machine-readable report (JSON) and a fixed-width text table.
std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace vsod
