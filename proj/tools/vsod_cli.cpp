// Command-line entry point: train, infer, eval, bench, synth-preview.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include "vsod/bench.hpp"
#include "vsod/checkpoint.hpp"
#include "vsod/config.hpp"
#include "vsod/errors.hpp"
#include "vsod/io.hpp"
#include "vsod/metrics.hpp"
#include "vsod/parallel.hpp"
#include "vsod/pipeline.hpp"
#include "vsod/synth.hpp"
#include "vsod/train.hpp"

namespace fs = std::filesystem;
using namespace vsod;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
}

struct TrainArgs {
  std::string config;
  std::string stage;
  std::string out;
  std::string init;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
  RunConfig cfg = parse_config(args.config);
  cfg.train.stage = parse_train_stage(args.stage);
  if (args.seed) cfg.train.seed = *args.seed;
  cfg.validate();

  const fs::path out(args.out);
  fs::create_directories(out);
  write_text(out / "config.yaml", serialize_config(cfg));

  SegmentationNetwork model;
  if (!args.init.empty()) {
    model = load_checkpoint(args.init).model;
    if (!(model.config() == cfg.model)) {
      throw ConfigError(fmt::format("checkpoint {} was trained with a different model section", args.init));
    }
  } else {
    model = SegmentationNetwork::build(cfg.model, cfg.train.seed);
  }

  std::unique_ptr<ClipSource> source;
  if (cfg.train.stage == TrainStage::Images) {
    if (!cfg.data.images) throw ConfigError("config key 'data.images' is required for the images stage");
    source = std::make_unique<SyntheticImageSource>(read_image_instances(*cfg.data.images), cfg.synth_config(),
                                                    cfg.model.normalization);
  } else {
    if (!cfg.data.video) throw ConfigError("config key 'data.video' is required for the video stage");
    std::vector<AnnotatedVideo> videos;
    for (auto& seq : read_dataset(*cfg.data.video)) {
      videos.push_back({seq.name, std::move(seq.frames), seq.dense_masks()});
    }
    source = std::make_unique<VideoSequenceSource>(std::move(videos), cfg.train.clip_length, cfg.train.max_span,
                                                   cfg.model.normalization);
  }

  std::ofstream history(out / "history.tsv");
  history << "epoch\tlr\tloss\n";
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const EpochRecord& r, const SegmentationNetwork& m, const Adam& adam) {
    history << fmt::format("{}\t{:.6e}\t{:.9f}\n", r.epoch, r.lr, r.mean_loss) << std::flush;
    CheckpointMeta meta;
    meta.train = cfg.train;
    meta.epoch = r.epoch + 1;
    meta.metrics["loss"] = r.mean_loss;
    save_checkpoint(out / "checkpoint", m, meta, &adam);
  };
  const TrainResult result = train_stage(model, *source, cfg.train, hooks);
  fmt::print("trained {} epochs, final loss {:.6f}, checkpoint {}\n", result.meta.epoch,
             result.meta.metrics.at("loss"), (out / "checkpoint").string());
  return 0;
}

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string split;
  int clip_length = 8;
  int overlap = 3;
  bool dense = false;
  double threshold = 0.5;
  bool save_probabilities = false;
  std::optional<std::uint64_t> seed;
};

int run_infer(const InferArgs& args) {
  ClipScheduleConfig schedule{args.clip_length, args.overlap};
  if (args.dense) schedule = ClipScheduleConfig::dense(args.clip_length);
  schedule.validate();
  if (!(args.threshold > 0.0 && args.threshold < 1.0)) {
    throw InvalidArgument(fmt::format("--threshold {} outside (0, 1)", args.threshold));
  }
  const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint);

  const fs::path input(args.input);
  struct Job {
    std::string name;
    fs::path frames;
  };
  std::vector<Job> jobs;
  if (fs::is_directory(input / "JPEGImages")) {
    for (const auto& name : list_sequences(input, args.split)) jobs.push_back({name, input / "JPEGImages" / name});
  } else {
    jobs.push_back({input.filename().string(), input});
  }

  const fs::path out(args.out);
  fs::create_directories(out);
  {
    YAML::Emitter e;
    e << YAML::BeginMap;
    e << YAML::Key << "checkpoint" << YAML::Value << fs::absolute(args.checkpoint).string();
    e << YAML::Key << "fingerprint" << YAML::Value << ckpt.meta.fingerprint;
    e << YAML::Key << "clip_length" << YAML::Value << schedule.clip_length;
    e << YAML::Key << "overlap" << YAML::Value << schedule.overlap;
    e << YAML::Key << "threshold" << YAML::Value << args.threshold;
    e << YAML::EndMap;
    write_text(out / "infer.yaml", std::string(e.c_str()) + "\n");
  }

  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto files = list_images(job.frames);
    const VideoTensor clip = normalize_clip(read_frames(job.frames), ckpt.meta.network.normalization);
    const auto [probs, masks] = segment_video(ckpt.model, clip, schedule, args.threshold);
    const fs::path dir = out / job.name;
    for (int t = 0; t < masks.frames(); ++t) {
      const std::string stem = files[static_cast<std::size_t>(t)].stem().string();
      write_mask(dir / (stem + ".png"), masks.frame(t));
      if (args.save_probabilities) write_probability_map(dir / (stem + ".tiff"), probs.frame(t));
    }
    spdlog::info("{}: {} frames", job.name, masks.frames());
  });
  fmt::print("segmented {} sequence(s) into {}\n", jobs.size(), out.string());
  return 0;
}

struct EvalArgs {
  std::string protocol;
  std::string pred;
  std::string gt;
  std::string out;
  std::string split;
  bool exclude_first_last = false;
  double beta_squared = 1.0;
  bool mae_raw = false;
  std::optional<int> boundary_radius;
  double threshold = 0.5;
  std::optional<std::uint64_t> seed;
};

int run_eval(const EvalArgs& args) {
  const bool davis = args.protocol == "davis";
  const LayoutKind layout = davis ? LayoutKind::Davis : LayoutKind::Sparse;
  const fs::path pred_root(args.pred), gt_root(args.gt);

  std::map<std::string, std::vector<FloatMap>> pred;
  std::map<std::string, std::vector<BinaryMask>> gt_dense;
  std::map<std::string, std::vector<std::optional<BinaryMask>>> gt_sparse;
  for (const auto& name : list_sequences(gt_root, args.split)) {
    SequenceData seq = read_sequence(gt_root, name, layout, false);
    if (davis) {
      for (auto& a : seq.annotations) gt_dense[name].push_back(std::move(*a));
    } else {
      gt_sparse[name] = std::move(seq.annotations);
    }
    const fs::path dir = pred_root / name;
    if (!fs::is_directory(dir)) continue;
    std::vector<FloatMap> frames;
    for (const auto& stem : seq.frame_stems) {
      const fs::path png = dir / (stem + ".png");
      if (args.mae_raw) {
        frames.push_back(read_probability_map(dir / (stem + ".tiff")));
      } else {
        if (!fs::exists(png)) throw IoError(fmt::format("prediction missing: {}", png.string()));
        frames.push_back(to_float_map(read_mask(png)));
      }
    }
    pred[name] = std::move(frames);
  }

  EvalReport report;
  if (davis) {
    DavisOptions opt;
    opt.exclude_first_last = args.exclude_first_last;
    opt.boundary.tolerance_radius = args.boundary_radius;
    opt.threshold = args.threshold;
    report = evaluate_davis(pred, gt_dense, opt);
  } else {
    SaliencyOptions opt;
    opt.beta_squared = args.beta_squared;
    opt.binarize_for_mae = !args.mae_raw;
    opt.threshold = args.threshold;
    report = evaluate_saliency(pred, gt_sparse, opt);
  }
  write_text(args.out, report_to_json(report));
  fmt::print("{}", report_to_table(report));
  return 0;
}

struct BenchArgs {
  std::string checkpoint;
  std::string config;
  std::string resolution = "854x480";
  int frames = 8;
  int warmup = 3;
  int iterations = 10;
  std::optional<std::uint64_t> seed;
};

std::pair<int, int> parse_resolution(const std::string& text) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> w >> x >> h) || x != 'x' || w < 1 || h < 1 || in.peek() != EOF) {
    throw InvalidArgument(fmt::format("--resolution '{}' must look like 854x480", text));
  }
  return {w, h};
}

int run_bench(const BenchArgs& args) {
  const auto [w, h] = parse_resolution(args.resolution);
  SegmentationNetwork model;
  if (!args.checkpoint.empty()) {
    model = load_checkpoint(args.checkpoint).model;
  } else if (!args.config.empty()) {
    model = SegmentationNetwork::build(parse_config(args.config).model, args.seed.value_or(0));
  } else {
    model = SegmentationNetwork::build(NetworkConfig{}, args.seed.value_or(0));
  }
  BenchOptions opt;
  opt.warmup = args.warmup;
  opt.iterations = args.iterations;
  opt.seed = args.seed.value_or(0);
  fmt::print("{}", format_bench_report(bench_runtime(model, h, w, args.frames, opt)));
  return 0;
}

struct SynthArgs {
  std::string image;
  std::string masks;
  std::string out;
  std::string config;
  int clip_length = 8;
  std::optional<std::uint64_t> seed;
};

int run_synth_preview(const SynthArgs& args) {
  SynthConfig synth{args.clip_length, {}};
  ChannelNormalization norm;
  if (!args.config.empty()) {
    const RunConfig cfg = parse_config(args.config);
    synth.per_step = cfg.synth;
    norm = cfg.model.normalization;
  }
  const Video8 image = read_image(args.image);
  std::vector<BinaryMask> instances;
  for (const auto& m : list_images(args.masks)) instances.push_back(read_mask(m));
  if (instances.empty()) throw IoError(fmt::format("no instance masks in {}", args.masks));

  std::mt19937_64 rng(args.seed.value_or(0));
  const VideoTensor normalized = normalize_clip(image, norm);
  const auto [clip, masks] = synthesize_clip(normalized, instances, synth, rng);
  const VideoTensor raw = denormalize_clip(clip, norm);
  std::vector<std::uint8_t> bytes(raw.values().size());
  std::transform(raw.values().begin(), raw.values().end(), bytes.begin(),
                 [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); });
  const Video8 frames(raw.frames(), raw.height(), raw.width(), std::move(bytes));
  const fs::path out(args.out);
  for (int t = 0; t < frames.frames(); ++t) {
    write_image(out / fmt::format("frame_{:05d}.png", t), frames, t);
    write_mask(out / fmt::format("mask_{:05d}.png", t), masks.frame(t));
  }
  fmt::print("wrote {} frames to {}\n", frames.frames(), out.string());
  return 0;
}

int report_error(const std::string& kind, const std::string& message) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::fprintf(stderr, "vsod-error[%s]: %s\n", kind.c_str(), line.c_str());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video salient-object segmentation toolkit"};
  app.require_subcommand(1);
  spdlog::set_pattern("[%l] %v");
  if (const char* level = std::getenv("VSOD_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(level));

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one stage from a config file");
  train_cmd->add_option("--config", train.config, "Run configuration (YAML)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--stage", train.stage, "Training stage")->required()->check(CLI::IsMember({"images", "video"}));
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--init", train.init, "Checkpoint to start from");
  train_cmd->add_option("--seed", train.seed, "Random seed (overrides train.seed)");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Segment every sequence under a directory");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint directory")->required();
  infer_cmd->add_option("--input", infer.input, "DAVIS-style root or a directory of frames")->required();
  infer_cmd->add_option("--out", infer.out, "Output directory")->required();
  infer_cmd->add_option("--split", infer.split, "Sequence list file inside the input root");
  infer_cmd->add_option("--clip-length", infer.clip_length, "Frames per window (T_c)")->capture_default_str();
  infer_cmd->add_option("--overlap", infer.overlap, "Frames shared by consecutive windows (T_o)")
      ->capture_default_str();
  infer_cmd->add_flag("--dense", infer.dense, "Online mode: overlap = clip length - 1");
  infer_cmd->add_option("--threshold", infer.threshold, "Foreground probability threshold")->capture_default_str();
  infer_cmd->add_flag("--save-probabilities", infer.save_probabilities, "Also write float TIFF probability maps");
  infer_cmd->add_option("--seed", infer.seed, "Random seed (inference is deterministic)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval_cmd->add_option("--protocol", eval.protocol, "Evaluation protocol")
      ->required()
      ->check(CLI::IsMember({"davis", "saliency"}));
  eval_cmd->add_option("--pred", eval.pred, "Prediction root (<pred>/<seq>/<frame>.png)")->required();
  eval_cmd->add_option("--gt", eval.gt, "DAVIS-style ground-truth root")->required();
  eval_cmd->add_option("--out", eval.out, "Report file (JSON)")->required();
  eval_cmd->add_option("--split", eval.split, "Sequence list file inside the ground-truth root");
  eval_cmd->add_flag("--exclude-first-last", eval.exclude_first_last, "Skip the first and last frame (davis)");
  eval_cmd->add_option("--beta2", eval.beta_squared, "F-measure beta squared (saliency)")->capture_default_str();
  eval_cmd->add_flag("--mae-raw", eval.mae_raw, "MAE on raw probabilities from .tiff maps (saliency)");
  eval_cmd->add_option("--boundary-radius", eval.boundary_radius, "Boundary tolerance in pixels (davis)");
  eval_cmd->add_option("--threshold", eval.threshold, "Binarization threshold")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Random seed (evaluation is deterministic)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Measure parameters and forward runtime");
  bench_cmd->add_option("--checkpoint", bench.checkpoint, "Checkpoint directory");
  bench_cmd->add_option("--config", bench.config, "Run configuration (model section is used)");
  bench_cmd->add_option("--resolution", bench.resolution, "WIDTHxHEIGHT")->capture_default_str();
  bench_cmd->add_option("--frames", bench.frames, "Frames per clip")->capture_default_str();
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed iterations (>= 3)")->capture_default_str();
  bench_cmd->add_option("--iterations", bench.iterations, "Timed iterations (>= 10)")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Random seed for weights and input");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-preview", "Write a synthetic clip made from one image");
  synth_cmd->add_option("--image", synth.image, "Source image")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--masks", synth.masks, "Directory of instance masks")->required();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--config", synth.config, "Run configuration (synth section is used)");
  synth_cmd->add_option("--clip-length", synth.clip_length, "Frames to synthesize")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    selected_device();
    if (train_cmd->parsed()) return run_train(train);
    if (infer_cmd->parsed()) return run_infer(infer);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (bench_cmd->parsed()) return run_bench(bench);
    if (synth_cmd->parsed()) return run_synth_preview(synth);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("io", e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
