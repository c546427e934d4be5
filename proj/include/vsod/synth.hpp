#pragma once

#include <array>
#include <random>
#include <utility>
#include <vector>

#include "vsod/core_types.hpp"

namespace vsod {

/// Per-step random motion. Ranges are symmetric around the identity; a
/// zero range disables that component.
struct TransformSpec {
  double rotation_deg = 10.0;      // +- degrees
  double translation_frac = 0.05;  // +- fraction of width / height
  double scale_min = 0.95;
  double scale_max = 1.05;
  double shear_deg = 5.0;          // +- degrees
  int grid_points = 4;             // piecewise-affine control points per axis
  double jitter_frac = 0.02;       // +- fraction of a grid cell

  void validate() const;
  static TransformSpec none();

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

struct SynthConfig {
  int clip_length = 8;
  TransformSpec per_step;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// One incremental motion step, stored as its inverse (destination to
/// source) map: a piecewise-affine mesh warp followed by an affine map.
class WarpStep {
 public:
  static WarpStep identity() { return WarpStep{}; }
  /// Inverse map as a row-major 2x3 matrix: src = M * [x, y, 1].
  static WarpStep affine(const std::array<double, 6>& inverse);
  static WarpStep translation(double dx, double dy);

  /// Adds a mesh warp over a regular grid of `grid_points` x `grid_points`
  /// nodes spanning the image; node (r, c) maps to itself plus offsets[r * grid + c].
  WarpStep with_mesh(int grid_points, int height, int width, std::vector<Point> offsets) const;

  Point map(Point p) const;

 private:
  Point mesh_map(Point p) const;

  std::array<double, 6> inverse_{1, 0, 0, 0, 1, 0};
  int grid_ = 0;
  double cell_w_ = 0.0;
  double cell_h_ = 0.0;
  std::vector<Point> offsets_;
};

/// Cumulative transform of one frame: the composition of the first k steps.
class WarpTransform {
 public:
  WarpTransform() = default;
  explicit WarpTransform(std::vector<WarpStep> steps) : steps_(std::move(steps)) {}

  std::size_t step_count() const noexcept { return steps_.size(); }
  /// Maps a destination pixel of this frame back to the source image.
  Point map(Point p) const;

 private:
  std::vector<WarpStep> steps_;
};

/// transform[0] = identity, transform[i] = step_i o transform[i-1].
std::vector<WarpTransform> compose_transform_chain(const std::vector<WarpStep>& steps);

/// Draws clip_length - 1 random steps for an image of the given size and
/// composes them.
std::vector<WarpTransform> sample_transform_chain(const SynthConfig& cfg, int height, int width,
                                                  std::mt19937_64& rng);

/// Element-wise OR of same-sized instance masks.
BinaryMask union_instance_masks(const std::vector<BinaryMask>& instances);

/// Bilinear warp with edge replication, one output frame per transform.
/// `image` must be a single-frame clip.
VideoTensor warp_image(const VideoTensor& image, const std::vector<WarpTransform>& chain);

/// Nearest-neighbour warp with zero fill, one output frame per transform.
MaskSequence warp_mask(const BinaryMask& mask, const std::vector<WarpTransform>& chain);

/// A clip synthesized from a single image and its instance masks.
std::pair<VideoTensor, MaskSequence> synthesize_clip(const VideoTensor& image, const std::vector<BinaryMask>& instances,
                                                     const SynthConfig& cfg, std::mt19937_64& rng);

}  // namespace vsod
