#include "vsod/metrics.hpp"

#include <cmath>
#include <fmt/format.h>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "vsod/errors.hpp"
#include "vsod/parallel.hpp"

namespace vsod {

namespace {

void check_same_shape(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw InvalidArgument(fmt::format("{}: prediction is {}x{} but ground truth is {}x{}", what, h1, w1, h2, w2));
  }
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

int BoundaryMatchConfig::radius_for(int height, int width) const {
  if (tolerance_radius) {
    if (*tolerance_radius < 1) throw InvalidArgument("boundary tolerance radius must be >= 1");
    return *tolerance_radius;
  }
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
}

double region_jaccard(const BinaryMask& pred, const BinaryMask& gt) {
  check_same_shape(pred.height, pred.width, gt.height, gt.width, "region_jaccard");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] & gt.data[i];
    uni += pred.data[i] | gt.data[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask mask_contour(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  auto fg = [&](int y, int x) {
    return y >= 0 && x >= 0 && y < mask.height && x < mask.width && mask.at(y, x) != 0;
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!fg(y, x)) continue;
      if (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)) out.at(y, x) = 1;
    }
  }
  return out;
}

BinaryMask dilate_disk(const BinaryMask& mask, int radius) {
  if (radius < 0) throw InvalidArgument("dilation radius must be non-negative");
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dy, dx);
    }
  }
  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (auto [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && xx >= 0 && yy < mask.height && xx < mask.width) out.at(yy, xx) = 1;
      }
    }
  }
  return out;
}

double boundary_f_measure(const BinaryMask& pred, const BinaryMask& gt, const BoundaryMatchConfig& cfg) {
  check_same_shape(pred.height, pred.width, gt.height, gt.width, "boundary_f_measure");
  const int radius = cfg.radius_for(gt.height, gt.width);
  const BinaryMask pc = mask_contour(pred);
  const BinaryMask gc = mask_contour(gt);
  const std::size_t np = pc.area(), ng = gc.area();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const BinaryMask gd = dilate_disk(gc, radius);
  const BinaryMask pd = dilate_disk(pc, radius);
  std::size_t pred_hits = 0, gt_hits = 0;
  for (std::size_t i = 0; i < pc.data.size(); ++i) {
    pred_hits += pc.data[i] & gd.data[i];
    gt_hits += gc.data[i] & pd.data[i];
  }
  const double precision = static_cast<double>(pred_hits) / static_cast<double>(np);
  const double recall = static_cast<double>(gt_hits) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double saliency_f_measure(const BinaryMask& pred, const BinaryMask& gt, double beta_squared) {
  check_same_shape(pred.height, pred.width, gt.height, gt.width, "saliency_f_measure");
  if (!(beta_squared > 0.0)) throw InvalidArgument("beta^2 must be positive");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp + fp == 0 && tp + fn == 0) return 1.0;
  if (tp + fp == 0 || tp + fn == 0 || tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return (1.0 + beta_squared) * precision * recall / (beta_squared * precision + recall);
}

double mean_absolute_error(const FloatMap& pred, const BinaryMask& gt) {
  check_same_shape(pred.height, pred.width, gt.height, gt.width, "mean_absolute_error");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double p = pred.data[i];
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(fmt::format("prediction value {} outside [0,1]", p));
    sum += std::abs(p - static_cast<double>(gt.data[i]));
  }
  return sum / static_cast<double>(pred.data.size());
}

double mean_absolute_error(const BinaryMask& pred, const BinaryMask& gt) {
  return mean_absolute_error(to_float_map(pred), gt);
}

BinaryMask threshold_map(const FloatMap& map, double threshold) {
  BinaryMask out(map.height, map.width);
  for (std::size_t i = 0; i < map.data.size(); ++i) out.data[i] = map.data[i] > threshold ? 1 : 0;
  return out;
}

namespace {

template <class GtMap>
void check_sequence_names(const std::map<std::string, std::vector<FloatMap>>& pred, const GtMap& gt) {
  std::vector<std::string> missing;
  for (const auto& [name, frames] : gt) {
    if (!pred.contains(name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
    throw InvalidArgument(fmt::format("predictions missing for sequences: {}", list));
  }
  if (gt.empty()) throw InvalidArgument("no ground-truth sequences to evaluate");
}

}  // namespace

namespace {

template <class Frames>
std::vector<std::pair<std::string, const Frames*>> flatten(const std::map<std::string, Frames>& gt) {
  std::vector<std::pair<std::string, const Frames*>> out;
  for (const auto& [name, frames] : gt) out.emplace_back(name, &frames);
  return out;
}

}  // namespace

EvalReport evaluate_davis(const std::map<std::string, std::vector<FloatMap>>& pred,
                          const std::map<std::string, std::vector<BinaryMask>>& gt, const DavisOptions& options) {
  check_sequence_names(pred, gt);
  const auto items = flatten(gt);
  std::vector<SequenceScore> scores(items.size());
  parallel_for(items.size(), [&](std::size_t k) {
    const auto& [name, gt_ptr] = items[k];
    const auto& gt_frames = *gt_ptr;
    const auto& p = pred.at(name);
    if (p.size() != gt_frames.size()) {
      throw InvalidArgument(fmt::format("sequence {}: {} predicted frames but {} annotated", name, p.size(),
                                        gt_frames.size()));
    }
    std::size_t first = 0, last = gt_frames.size();
    if (options.exclude_first_last && gt_frames.size() > 2) {
      first = 1;
      last = gt_frames.size() - 1;
    }
    std::vector<double> j, f;
    for (std::size_t i = first; i < last; ++i) {
      const BinaryMask m = threshold_map(p[i], options.threshold);
      j.push_back(region_jaccard(m, gt_frames[i]));
      f.push_back(boundary_f_measure(m, gt_frames[i], options.boundary));
    }
    if (j.empty()) throw InvalidArgument(fmt::format("sequence {} has no frames to score", name));
    scores[k] = SequenceScore{name, j.size(), mean(j), mean(f), std::nullopt, std::nullopt};
  });

  EvalReport report;
  report.protocol = "davis";
  std::vector<double> js, fs;
  for (auto& s : scores) {
    js.push_back(*s.J);
    fs.push_back(*s.F);
    report.sequences.push_back(std::move(s));
  }
  report.J_mean = mean(js);
  report.F_mean = mean(fs);
  report.JF = (*report.J_mean + *report.F_mean) / 2.0;
  return report;
}

EvalReport evaluate_saliency(const std::map<std::string, std::vector<FloatMap>>& pred,
                             const std::map<std::string, std::vector<std::optional<BinaryMask>>>& gt,
                             const SaliencyOptions& options) {
  check_sequence_names(pred, gt);
  const auto items = flatten(gt);
  std::vector<SequenceScore> scores(items.size());
  parallel_for(items.size(), [&](std::size_t k) {
    const auto& [name, gt_ptr] = items[k];
    const auto& gt_frames = *gt_ptr;
    const auto& p = pred.at(name);
    if (p.size() != gt_frames.size()) {
      throw InvalidArgument(fmt::format("sequence {}: {} predicted frames but ground truth spans {}", name, p.size(),
                                        gt_frames.size()));
    }
    std::vector<double> fm, mae;
    for (std::size_t i = 0; i < gt_frames.size(); ++i) {
      if (!gt_frames[i]) {
        if (!options.annotated_frames_only) {
          throw InvalidArgument(fmt::format("sequence {} frame {} has no annotation", name, i));
        }
        continue;
      }
      const BinaryMask m = threshold_map(p[i], options.threshold);
      fm.push_back(saliency_f_measure(m, *gt_frames[i], options.beta_squared));
      mae.push_back(options.binarize_for_mae ? mean_absolute_error(m, *gt_frames[i])
                                             : mean_absolute_error(p[i], *gt_frames[i]));
    }
    if (fm.empty()) throw InvalidArgument(fmt::format("sequence {} has no annotated frames", name));
    scores[k] = SequenceScore{name, fm.size(), std::nullopt, std::nullopt, mean(fm), mean(mae)};
  });

  EvalReport report;
  report.protocol = "saliency";
  std::vector<double> fms, maes;
  for (auto& s : scores) {
    fms.push_back(*s.F_measure);
    maes.push_back(*s.MAE);
    report.sequences.push_back(std::move(s));
  }
  report.F_measure = mean(fms);
  report.MAE = mean(maes);
  return report;
}

namespace {

void put(nlohmann::ordered_json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:>9.4f}", *v) : fmt::format("{:>9}", "-"); }

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["protocol"] = report.protocol;
  put(j, "J_mean", report.J_mean);
  put(j, "F_mean", report.F_mean);
  put(j, "JF", report.JF);
  put(j, "F_measure", report.F_measure);
  put(j, "MAE", report.MAE);
  auto& seqs = j["sequences"] = nlohmann::ordered_json::array();
  for (const auto& s : report.sequences) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["frames_scored"] = s.frames_scored;
    put(e, "J", s.J);
    put(e, "F", s.F);
    put(e, "F_measure", s.F_measure);
    put(e, "MAE", s.MAE);
    seqs.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  out << fmt::format("{:<24}{:>8}{:>9}{:>9}{:>9}{:>9}\n", "sequence", "frames", "J", "F", "Fm", "MAE");
  for (const auto& s : report.sequences) {
    out << fmt::format("{:<24}{:>8}", s.name, s.frames_scored) << cell(s.J) << cell(s.F) << cell(s.F_measure)
        << cell(s.MAE) << "\n";
  }
  out << fmt::format("{:<24}{:>8}", "mean", "") << cell(report.J_mean) << cell(report.F_mean)
      << cell(report.F_measure) << cell(report.MAE) << "\n";
  if (report.JF) out << fmt::format("J&F {:.4f}\n", *report.JF);
  return out.str();
}

}  // namespace vsod
