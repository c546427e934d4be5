#include "vsod/synth.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <spdlog/spdlog.h>

#include "vsod/errors.hpp"

namespace vsod {

void TransformSpec::validate() const {
  if (rotation_deg < 0 || translation_frac < 0 || shear_deg < 0 || jitter_frac < 0) {
    throw ConfigError("transform ranges must be non-negative");
  }
  if (!(scale_min > 0.0) || scale_min > 1.0 || scale_max < 1.0) {
    throw ConfigError(fmt::format("scale range [{}, {}] must contain 1", scale_min, scale_max));
  }
  if (std::abs((1.0 - scale_min) - (scale_max - 1.0)) > 1e-12) {
    throw ConfigError(fmt::format("scale range [{}, {}] must be symmetric around 1", scale_min, scale_max));
  }
  if (jitter_frac >= 0.5) throw ConfigError("mesh jitter must be below half a cell");
  if (grid_points < 2) throw ConfigError("mesh needs at least 2 control points per axis");
}

TransformSpec TransformSpec::none() { return {0.0, 0.0, 1.0, 1.0, 0.0, 4, 0.0}; }

void SynthConfig::validate() const {
  if (clip_length < 1) throw ConfigError(fmt::format("synth clip length must be positive, got {}", clip_length));
  per_step.validate();
}

WarpStep WarpStep::affine(const std::array<double, 6>& inverse) {
  WarpStep s;
  s.inverse_ = inverse;
  return s;
}

WarpStep WarpStep::translation(double dx, double dy) { return affine({1, 0, -dx, 0, 1, -dy}); }

WarpStep WarpStep::with_mesh(int grid_points, int height, int width, std::vector<Point> offsets) const {
  if (grid_points < 2) throw InvalidArgument("mesh needs at least 2 control points per axis");
  if (offsets.size() != static_cast<std::size_t>(grid_points) * grid_points) {
    throw InvalidArgument("one offset per mesh node required");
  }
  if (height < 2 || width < 2) throw InvalidArgument("mesh warp needs an image of at least 2x2");
  WarpStep s = *this;
  s.grid_ = grid_points;
  s.cell_w_ = static_cast<double>(width - 1) / (grid_points - 1);
  s.cell_h_ = static_cast<double>(height - 1) / (grid_points - 1);
  s.offsets_ = std::move(offsets);
  return s;
}

Point WarpStep::mesh_map(Point p) const {
  if (grid_ == 0) return p;
  const int last_cell = grid_ - 2;
  const int cx = std::clamp(static_cast<int>(std::floor(p.x / cell_w_)), 0, last_cell);
  const int cy = std::clamp(static_cast<int>(std::floor(p.y / cell_h_)), 0, last_cell);
  const double u = (p.x - cx * cell_w_) / cell_w_;
  const double v = (p.y - cy * cell_h_) / cell_h_;
  auto node = [&](int r, int c) {
    const auto& o = offsets_[static_cast<std::size_t>(r) * grid_ + c];
    return Point{c * cell_w_ + o.x, r * cell_h_ + o.y};
  };
  // Each cell is split along its anti-diagonal; the map is affine per triangle.
  if (u + v <= 1.0) {
    const Point a = node(cy, cx), b = node(cy, cx + 1), c = node(cy + 1, cx);
    return {a.x + u * (b.x - a.x) + v * (c.x - a.x), a.y + u * (b.y - a.y) + v * (c.y - a.y)};
  }
  const Point a = node(cy + 1, cx + 1), b = node(cy + 1, cx), c = node(cy, cx + 1);
  return {a.x + (1 - u) * (b.x - a.x) + (1 - v) * (c.x - a.x), a.y + (1 - u) * (b.y - a.y) + (1 - v) * (c.y - a.y)};
}

Point WarpStep::map(Point p) const {
  const Point q = mesh_map(p);
  const auto& m = inverse_;
  return {m[0] * q.x + m[1] * q.y + m[2], m[3] * q.x + m[4] * q.y + m[5]};
}

Point WarpTransform::map(Point p) const {
  // The newest step is outermost, so its inverse is applied first.
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) p = it->map(p);
  return p;
}

std::vector<WarpTransform> compose_transform_chain(const std::vector<WarpStep>& steps) {
  std::vector<WarpTransform> chain;
  chain.reserve(steps.size() + 1);
  for (std::size_t i = 0; i <= steps.size(); ++i) {
    chain.emplace_back(std::vector<WarpStep>(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(i)));
  }
  return chain;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Inverse of: translate by -center, scale, shear, rotate, translate by center + shift.
WarpStep random_affine(const TransformSpec& spec, int height, int width, std::mt19937_64& rng) {
  const double deg = std::numbers::pi / 180.0;
  const double angle = uniform(rng, -spec.rotation_deg, spec.rotation_deg) * deg;
  const double tx = uniform(rng, -spec.translation_frac, spec.translation_frac) * width;
  const double ty = uniform(rng, -spec.translation_frac, spec.translation_frac) * height;
  const double scale = uniform(rng, spec.scale_min, spec.scale_max);
  const double shear = std::tan(uniform(rng, -spec.shear_deg, spec.shear_deg) * deg);

  const double c = std::cos(angle), s = std::sin(angle);
  // Forward linear part L = R * Sh * S with Sh = [[1, shear], [0, 1]].
  const double l00 = c * scale, l01 = (c * shear - s) * scale;
  const double l10 = s * scale, l11 = (s * shear + c) * scale;
  const double det = l00 * l11 - l01 * l10;
  const double i00 = l11 / det, i01 = -l01 / det, i10 = -l10 / det, i11 = l00 / det;

  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  // src = L^-1 (dst - center - shift) + center
  const double ox = cx + tx, oy = cy + ty;
  return WarpStep::affine({i00, i01, cx - (i00 * ox + i01 * oy), i10, i11, cy - (i10 * ox + i11 * oy)});
}

}  // namespace

std::vector<WarpTransform> sample_transform_chain(const SynthConfig& cfg, int height, int width,
                                                  std::mt19937_64& rng) {
  cfg.validate();
  if (height < 1 || width < 1) throw InvalidArgument("image size must be positive");
  const auto& spec = cfg.per_step;
  std::vector<WarpStep> steps;
  for (int i = 1; i < cfg.clip_length; ++i) {
    WarpStep step = random_affine(spec, height, width, rng);
    if (spec.jitter_frac > 0.0 && height >= 2 && width >= 2) {
      const double jx = spec.jitter_frac * (width - 1) / (spec.grid_points - 1);
      const double jy = spec.jitter_frac * (height - 1) / (spec.grid_points - 1);
      std::vector<Point> offsets(static_cast<std::size_t>(spec.grid_points) * spec.grid_points);
      for (auto& o : offsets) {
        o.x = uniform(rng, -jx, jx);
        o.y = uniform(rng, -jy, jy);
      }
      step = step.with_mesh(spec.grid_points, height, width, std::move(offsets));
    }
    steps.push_back(std::move(step));
  }
  return compose_transform_chain(steps);
}

BinaryMask union_instance_masks(const std::vector<BinaryMask>& instances) {
  if (instances.empty()) throw InvalidArgument("union of zero instance masks");
  BinaryMask out(instances.front().height, instances.front().width);
  for (const auto& m : instances) {
    if (m.height != out.height || m.width != out.width) {
      throw InvalidArgument(fmt::format("instance mask {}x{} does not match {}x{}", m.height, m.width, out.height,
                                        out.width));
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] |= m.data[i];
  }
  return out;
}

VideoTensor warp_image(const VideoTensor& image, const std::vector<WarpTransform>& chain) {
  if (image.frames() != 1) throw InvalidArgument("warp_image expects a single-frame image");
  if (chain.empty()) throw InvalidArgument("empty transform chain");
  const int h = image.height(), w = image.width();
  std::vector<double> out;
  out.reserve(image.frame_size() * chain.size());
  for (const auto& tf : chain) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Point q = tf.map({double(x), double(y)});
        const double qx = std::clamp(q.x, 0.0, double(w - 1));
        const double qy = std::clamp(q.y, 0.0, double(h - 1));
        const int x0 = static_cast<int>(std::floor(qx)), y0 = static_cast<int>(std::floor(qy));
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double fx = qx - x0, fy = qy - y0;
        for (int c = 0; c < 3; ++c) {
          const double top = image.at(0, y0, x0, c) + fx * (image.at(0, y0, x1, c) - image.at(0, y0, x0, c));
          const double bottom = image.at(0, y1, x0, c) + fx * (image.at(0, y1, x1, c) - image.at(0, y1, x0, c));
          out.push_back(top + fy * (bottom - top));
        }
      }
    }
  }
  return VideoTensor(static_cast<int>(chain.size()), h, w, std::move(out), image.frame_rate());
}

MaskSequence warp_mask(const BinaryMask& mask, const std::vector<WarpTransform>& chain) {
  if (chain.empty()) throw InvalidArgument("empty transform chain");
  const int h = mask.height, w = mask.width;
  std::vector<std::uint8_t> out;
  out.reserve(mask.size() * chain.size());
  for (const auto& tf : chain) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Point q = tf.map({double(x), double(y)});
        const double rx = std::floor(q.x + 0.5), ry = std::floor(q.y + 0.5);
        const bool inside = rx >= 0 && ry >= 0 && rx <= w - 1 && ry <= h - 1;
        out.push_back(inside ? mask.at(static_cast<int>(ry), static_cast<int>(rx)) : 0);
      }
    }
  }
  return MaskSequence(static_cast<int>(chain.size()), h, w, std::move(out));
}

std::pair<VideoTensor, MaskSequence> synthesize_clip(const VideoTensor& image, const std::vector<BinaryMask>& instances,
                                                     const SynthConfig& cfg, std::mt19937_64& rng) {
  if (image.frames() != 1) throw InvalidArgument("synthesize_clip expects a single-frame image");
  const BinaryMask fg = union_instance_masks(instances);
  if (fg.height != image.height() || fg.width != image.width()) {
    throw InvalidArgument(fmt::format("masks are {}x{} but image is {}x{}", fg.height, fg.width, image.height(),
                                      image.width()));
  }
  if (fg.area() == 0) spdlog::warn("synthesizing a clip with an empty foreground mask");
  const auto chain = sample_transform_chain(cfg, image.height(), image.width(), rng);
  return {warp_image(image, chain), warp_mask(fg, chain)};
}

}  // namespace vsod
