#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vsod/core_types.hpp"
#include "vsod/network.hpp"
#include "vsod/synth.hpp"

namespace vsod {

enum class TrainStage { Images, Video };
enum class LossKind { BinaryCrossEntropy, TwoClassCrossEntropy };

std::string to_string(TrainStage stage);
std::string to_string(LossKind loss);
TrainStage parse_train_stage(const std::string& text);
LossKind parse_loss_kind(const std::string& text);

struct TrainConfig {
  double initial_lr = 1e-5;
  double decay_gamma = 0.95;  // per-epoch multiplicative decay
  int epochs = 20;
  int batch_size = 2;
  int clip_length = 8;  // T_c
  int max_span = 32;    // S
  TrainStage stage = TrainStage::Images;
  LossKind loss = LossKind::BinaryCrossEntropy;
  std::uint64_t seed = 0;
  /// Optimizer steps per epoch; 0 means one pass over the source.
  int iterations_per_epoch = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits, same shape as the logits
};

/// Mean binary cross-entropy between sigmoid(logits) and the mask, computed
/// as max(x, 0) - x y + log(1 + exp(-|x|)). `logits` is (1, T, H, W).
LossResult pixel_cross_entropy(const Tensor& logits, const MaskSequence& gt);

/// Mean softmax cross-entropy over two classes; `logits` is (2, T, H, W)
/// with channel 1 the foreground.
LossResult two_class_cross_entropy(const Tensor& logits, const MaskSequence& gt);

LossResult compute_loss(LossKind kind, const Tensor& head_logits, const MaskSequence& gt);

/// initial_lr * gamma^epoch.
double lr_at_epoch(double initial_lr, double gamma, int epoch);

/// Adaptive-moment optimizer. Moments are keyed by parameter path, so a
/// state can be saved and restored alongside the weights.
class Adam {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    friend bool operator==(const Moments&, const Moments&) = default;
  };

  Adam() = default;
  Adam(double beta1, double beta2, double epsilon);

  /// One update of every trainable parameter from its accumulated gradient.
  template <class Module>
  void step(Module& module, double lr) {
    ++steps_;
    module.visit_parameters("", [&](const std::string& path, Parameter& p) {
      if (p.trainable) update(path, p, lr);
    });
  }

  std::uint64_t steps() const noexcept { return steps_; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  void restore(std::uint64_t steps, std::map<std::string, Moments> moments);

 private:
  void update(const std::string& path, Parameter& p, double lr);

  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

/// A normalized clip with its per-frame ground truth.
struct TrainingClip {
  VideoTensor clip;
  MaskSequence masks;
};

class ClipSource {
 public:
  virtual ~ClipSource() = default;
  /// Number of underlying items (images or sequences).
  virtual std::size_t size() const = 0;
  virtual TrainingClip sample(std::mt19937_64& rng) = 0;
};

/// Returns the given clips in order, cycling.
class FixedClipSource : public ClipSource {
 public:
  explicit FixedClipSource(std::vector<TrainingClip> clips);
  std::size_t size() const override { return clips_.size(); }
  TrainingClip sample(std::mt19937_64& rng) override;

 private:
  std::vector<TrainingClip> clips_;
  std::size_t next_ = 0;
};

struct InstanceImage {
  std::string name;
  Video8 image;  // single frame
  std::vector<BinaryMask> instances;
};

/// Image stage: a uniformly chosen image turned into a synthetic clip.
class SyntheticImageSource : public ClipSource {
 public:
  SyntheticImageSource(std::vector<InstanceImage> images, SynthConfig synth, ChannelNormalization norm);
  std::size_t size() const override { return images_.size(); }
  TrainingClip sample(std::mt19937_64& rng) override;

 private:
  std::vector<InstanceImage> images_;
  std::vector<VideoTensor> normalized_;
  std::vector<BinaryMask> foreground_;
  SynthConfig synth_;
};

struct AnnotatedVideo {
  std::string name;
  Video8 frames;
  MaskSequence masks;
};

/// Video stage: a uniformly chosen sequence sampled with sample_training_clip.
class VideoSequenceSource : public ClipSource {
 public:
  VideoSequenceSource(std::vector<AnnotatedVideo> videos, int clip_length, int max_span, ChannelNormalization norm);
  std::size_t size() const override { return videos_.size(); }
  TrainingClip sample(std::mt19937_64& rng) override;

 private:
  std::vector<AnnotatedVideo> videos_;
  std::vector<VideoTensor> normalized_;
  int clip_length_;
  int max_span_;
};

/// Gathers frames `indices` of a clip into a new clip (indices may repeat).
VideoTensor gather_frames(const VideoTensor& clip, const std::vector<int>& indices);
MaskSequence gather_frames(const MaskSequence& masks, const std::vector<int>& indices);

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  int format_version = kCheckpointFormatVersion;
  std::string fingerprint;
  NetworkConfig network;
  TrainConfig train;
  int epoch = 0;
  /// File name of the optimizer state inside the checkpoint, empty if absent.
  std::string optimizer_state;
  std::map<std::string, double> metrics;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  int iterations = 0;
};

struct TrainHooks {
  std::function<void(int iteration, double loss, double lr)> on_iteration;
  std::function<void(const EpochRecord&, const SegmentationNetwork&, const Adam&)> on_epoch_end;
};

struct TrainResult {
  CheckpointMeta meta;
  std::vector<EpochRecord> history;
};

/// Runs cfg.epochs epochs of Adam on clips drawn from `source`, with the
/// learning rate fixed within an epoch at lr_at_epoch. Throws NumericError
/// on a non-finite loss.
TrainResult train_stage(SegmentationNetwork& model, ClipSource& source, const TrainConfig& cfg,
                        const TrainHooks& hooks = {}, Adam* optimizer = nullptr);

/// Mean of the loss over a list of clips without updating the model.
double evaluate_loss(const SegmentationNetwork& model, const std::vector<TrainingClip>& clips, LossKind loss);

}  // namespace vsod
