#include "vsod/train.hpp"

#include <cmath>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vsod/errors.hpp"
#include "vsod/pipeline.hpp"

namespace vsod {

std::string to_string(TrainStage stage) { return stage == TrainStage::Images ? "images" : "video"; }

std::string to_string(LossKind loss) {
  return loss == LossKind::BinaryCrossEntropy ? "binary-cross-entropy" : "two-class-cross-entropy";
}

TrainStage parse_train_stage(const std::string& text) {
  if (text == "images") return TrainStage::Images;
  if (text == "video") return TrainStage::Video;
  throw ConfigError(fmt::format("unknown training stage '{}' (expected images or video)", text));
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "binary-cross-entropy") return LossKind::BinaryCrossEntropy;
  if (text == "two-class-cross-entropy") return LossKind::TwoClassCrossEntropy;
  throw ConfigError(
      fmt::format("unknown loss '{}' (expected binary-cross-entropy or two-class-cross-entropy)", text));
}

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) {
    throw ConfigError(fmt::format("train.initial_lr must be positive, got {}", initial_lr));
  }
  if (!(decay_gamma > 0.0 && decay_gamma <= 1.0)) {
    throw ConfigError(fmt::format("train.decay_gamma must be in (0, 1], got {}", decay_gamma));
  }
  if (epochs < 1) throw ConfigError(fmt::format("train.epochs must be positive, got {}", epochs));
  if (batch_size < 1) throw ConfigError(fmt::format("train.batch_size must be positive, got {}", batch_size));
  if (clip_length < 1) throw ConfigError(fmt::format("train.clip_length must be positive, got {}", clip_length));
  if (max_span < 1) throw ConfigError(fmt::format("train.max_span must be positive, got {}", max_span));
  if (iterations_per_epoch < 0) {
    throw ConfigError(fmt::format("train.iterations_per_epoch must be >= 0, got {}", iterations_per_epoch));
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1 and train.adam_beta2 must be in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
}

namespace {

void check_logits(const Tensor& logits, int channels, const MaskSequence& gt, const char* what) {
  if (logits.channels() != channels || logits.extent() != gt.extent()) {
    throw InvalidArgument(fmt::format("{}: logits {} do not match masks {} with {} channel(s)", what,
                                      logits.shape_string(), to_string(gt.extent()), channels));
  }
}

[[noreturn]] void non_finite(const char* what, std::size_t i, double v) {
  throw NumericError(fmt::format("{}: non-finite logit {} at element {}", what, v, i));
}

}  // namespace

LossResult pixel_cross_entropy(const Tensor& logits, const MaskSequence& gt) {
  check_logits(logits, 1, gt, "pixel_cross_entropy");
  const auto x = logits.values();
  const auto y = gt.values();
  const double n = static_cast<double>(x.size());
  LossResult r{0.0, Tensor(1, logits.extent())};
  auto g = r.grad.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) non_finite("pixel_cross_entropy", i, x[i]);
    const double yi = y[i];
    r.loss += std::max(x[i], 0.0) - x[i] * yi + std::log1p(std::exp(-std::abs(x[i])));
    g[i] = (sigmoid(x[i]) - yi) / n;
  }
  r.loss /= n;
  return r;
}

LossResult two_class_cross_entropy(const Tensor& logits, const MaskSequence& gt) {
  check_logits(logits, 2, gt, "two_class_cross_entropy");
  const double* l0 = logits.plane(0);
  const double* l1 = logits.plane(1);
  const auto y = gt.values();
  const std::size_t count = logits.plane_size();
  const double n = static_cast<double>(count);
  LossResult r{0.0, Tensor(2, logits.extent())};
  double* g0 = r.grad.plane(0);
  double* g1 = r.grad.plane(1);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(l0[i])) non_finite("two_class_cross_entropy", i, l0[i]);
    if (!std::isfinite(l1[i])) non_finite("two_class_cross_entropy", count + i, l1[i]);
    // Two-class softmax is a sigmoid of the logit difference.
    const double d = l1[i] - l0[i];
    const double yi = y[i];
    r.loss += std::max(d, 0.0) - d * yi + std::log1p(std::exp(-std::abs(d)));
    const double gd = (sigmoid(d) - yi) / n;
    g1[i] = gd;
    g0[i] = -gd;
  }
  r.loss /= n;
  return r;
}

LossResult compute_loss(LossKind kind, const Tensor& head_logits, const MaskSequence& gt) {
  return kind == LossKind::BinaryCrossEntropy ? pixel_cross_entropy(head_logits, gt)
                                              : two_class_cross_entropy(head_logits, gt);
}

double lr_at_epoch(double initial_lr, double gamma, int epoch) {
  if (epoch < 0) throw InvalidArgument(fmt::format("epoch must be non-negative, got {}", epoch));
  return initial_lr * std::pow(gamma, epoch);
}

Adam::Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::restore(std::uint64_t steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

void Adam::update(const std::string& path, Parameter& p, double lr) {
  auto& mo = moments_[path];
  if (mo.m.size() != p.size()) {
    mo.m.assign(p.size(), 0.0);
    mo.v.assign(p.size(), 0.0);
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = p.grad[i];
    mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
    mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
    p.value[i] -= lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + epsilon_);
  }
}

FixedClipSource::FixedClipSource(std::vector<TrainingClip> clips) : clips_(std::move(clips)) {
  if (clips_.empty()) throw InvalidArgument("clip source is empty");
  for (const auto& c : clips_) {
    if (!c.masks.matches(c.clip)) throw InvalidArgument("training clip and masks differ in shape");
  }
}

TrainingClip FixedClipSource::sample(std::mt19937_64&) {
  const auto& c = clips_[next_];
  next_ = (next_ + 1) % clips_.size();
  return c;
}

SyntheticImageSource::SyntheticImageSource(std::vector<InstanceImage> images, SynthConfig synth,
                                           ChannelNormalization norm)
    : images_(std::move(images)), synth_(synth) {
  synth_.validate();
  if (images_.empty()) throw InvalidArgument("image source is empty");
  for (const auto& item : images_) {
    if (item.image.frames() != 1) throw InvalidArgument(fmt::format("image {} must be a single frame", item.name));
    // Warping is a convex combination of pixels, so it commutes with the
    // per-channel affine normalization.
    normalized_.push_back(normalize_clip(item.image, norm));
    foreground_.push_back(union_instance_masks(item.instances));
  }
}

TrainingClip SyntheticImageSource::sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  const std::size_t i = pick(rng);
  const auto chain = sample_transform_chain(synth_, normalized_[i].height(), normalized_[i].width(), rng);
  return {warp_image(normalized_[i], chain), warp_mask(foreground_[i], chain)};
}

VideoSequenceSource::VideoSequenceSource(std::vector<AnnotatedVideo> videos, int clip_length, int max_span,
                                         ChannelNormalization norm)
    : videos_(std::move(videos)), clip_length_(clip_length), max_span_(max_span) {
  if (videos_.empty()) throw InvalidArgument("video source is empty");
  for (const auto& v : videos_) {
    if (v.frames.extent() != v.masks.extent()) {
      throw InvalidArgument(fmt::format("sequence {}: frames {} but masks {}", v.name, to_string(v.frames.extent()),
                                        to_string(v.masks.extent())));
    }
    normalized_.push_back(normalize_clip(v.frames, norm));
  }
}

TrainingClip VideoSequenceSource::sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, videos_.size() - 1);
  const std::size_t i = pick(rng);
  const auto spec = sample_training_clip(normalized_[i].frames(), clip_length_, max_span_, rng);
  return {gather_frames(normalized_[i], spec.indices), gather_frames(videos_[i].masks, spec.indices)};
}

VideoTensor gather_frames(const VideoTensor& clip, const std::vector<int>& indices) {
  std::vector<double> data;
  data.reserve(clip.frame_size() * indices.size());
  for (int t : indices) {
    if (t < 0 || t >= clip.frames()) throw InvalidArgument(fmt::format("frame index {} out of range", t));
    const auto f = clip.frame(t);
    data.insert(data.end(), f.begin(), f.end());
  }
  return VideoTensor(static_cast<int>(indices.size()), clip.height(), clip.width(), std::move(data),
                     clip.frame_rate());
}

MaskSequence gather_frames(const MaskSequence& masks, const std::vector<int>& indices) {
  std::vector<std::uint8_t> data;
  const std::size_t frame = static_cast<std::size_t>(masks.height()) * masks.width();
  data.reserve(frame * indices.size());
  for (int t : indices) {
    if (t < 0 || t >= masks.frames()) throw InvalidArgument(fmt::format("frame index {} out of range", t));
    const auto v = masks.values().subspan(static_cast<std::size_t>(t) * frame, frame);
    data.insert(data.end(), v.begin(), v.end());
  }
  return MaskSequence(static_cast<int>(indices.size()), masks.height(), masks.width(), std::move(data));
}

namespace {

void check_loss_matches_head(LossKind loss, HeadKind head) {
  const bool ok = (loss == LossKind::BinaryCrossEntropy) == (head == HeadKind::Sigmoid);
  if (!ok) {
    throw ConfigError(fmt::format("train.loss {} does not match decoder head {}", to_string(loss), to_string(head)));
  }
}

}  // namespace

TrainResult train_stage(SegmentationNetwork& model, ClipSource& source, const TrainConfig& cfg,
                        const TrainHooks& hooks, Adam* optimizer) {
  cfg.validate();
  check_loss_matches_head(cfg.loss, model.config().decoder.head);
  if (source.size() == 0) throw InvalidArgument("training source is empty");

  Adam local(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  Adam& adam = optimizer ? *optimizer : local;
  std::mt19937_64 rng(cfg.seed);
  const int iterations = cfg.iterations_per_epoch > 0
                             ? cfg.iterations_per_epoch
                             : static_cast<int>((source.size() + cfg.batch_size - 1) / cfg.batch_size);

  TrainResult result;
  int global_iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.initial_lr, cfg.decay_gamma, epoch);
    double epoch_loss = 0.0;
    for (int it = 0; it < iterations; ++it) {
      zero_grad(model);
      double batch_loss = 0.0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const TrainingClip item = source.sample(rng);
        Tape tape;
        const Tensor logits = model.forward(to_tensor(item.clip), &tape);
        LossResult loss = compute_loss(cfg.loss, logits, item.masks);
        if (!std::isfinite(loss.loss)) {
          throw NumericError(fmt::format("non-finite loss {} at epoch {} iteration {} (lr {})", loss.loss, epoch, it,
                                         lr));
        }
        loss.grad *= 1.0 / cfg.batch_size;
        model.backward(loss.grad, tape);
        batch_loss += loss.loss / cfg.batch_size;
      }
      adam.step(model, lr);
      epoch_loss += batch_loss;
      if (hooks.on_iteration) hooks.on_iteration(global_iteration, batch_loss, lr);
      ++global_iteration;
    }
    EpochRecord record{epoch, lr, epoch_loss / iterations, iterations};
    spdlog::info("epoch {} lr {:.3e} loss {:.6f}", epoch, lr, record.mean_loss);
    result.history.push_back(record);
    if (hooks.on_epoch_end) hooks.on_epoch_end(record, model, adam);
  }

  result.meta.fingerprint = model.architecture_fingerprint();
  result.meta.network = model.config();
  result.meta.train = cfg;
  result.meta.epoch = cfg.epochs;
  result.meta.metrics["loss"] = result.history.back().mean_loss;
  return result;
}

double evaluate_loss(const SegmentationNetwork& model, const std::vector<TrainingClip>& clips, LossKind loss) {
  if (clips.empty()) throw InvalidArgument("no clips to evaluate");
  double total = 0.0;
  for (const auto& c : clips) total += compute_loss(loss, model.forward(to_tensor(c.clip)), c.masks).loss;
  return total / static_cast<double>(clips.size());
}

}  // namespace vsod
