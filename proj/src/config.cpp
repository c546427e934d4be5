#include "vsod/config.hpp"

#include <array>
#include <cstdint>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <vector>

#include "vsod/errors.hpp"
#include "yaml_sections.hpp"

namespace vsod {

std::string to_string(LayoutKind kind) {
  switch (kind) {
    case LayoutKind::Davis:
      return "davis";
    case LayoutKind::Sparse:
      return "sparse";
    case LayoutKind::ImageInstances:
      return "image-instances";
  }
  return "davis";
}

LayoutKind parse_layout_kind(const std::string& text) {
  if (text == "davis") return LayoutKind::Davis;
  if (text == "sparse") return LayoutKind::Sparse;
  if (text == "image-instances") return LayoutKind::ImageInstances;
  throw ConfigError(fmt::format("unknown layout '{}' (expected davis, sparse or image-instances)", text));
}

void RunConfig::validate() const {
  model.validate();
  schedule.validate();
  train.validate();
  synth.validate();
  if (train.clip_length != schedule.clip_length) {
    throw ConfigError(fmt::format("train.clip_length ({}) must equal schedule.clip_length ({})", train.clip_length,
                                  schedule.clip_length));
  }
  const bool sigmoid_head = model.decoder.head == HeadKind::Sigmoid;
  if ((train.loss == LossKind::BinaryCrossEntropy) != sigmoid_head) {
    throw ConfigError(fmt::format("train.loss {} does not match model.decoder.head {}", to_string(train.loss),
                                  to_string(model.decoder.head)));
  }
  if (data.images && data.images->layout != LayoutKind::ImageInstances) {
    throw ConfigError("data.images.layout must be image-instances");
  }
  if (data.video && data.video->layout == LayoutKind::ImageInstances) {
    throw ConfigError("data.video.layout must be davis or sparse");
  }
}

namespace yaml_sections {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  if constexpr (std::is_integral_v<T>) return "an integer";
  if constexpr (std::is_floating_point_v<T>) return "a number";
  if constexpr (std::is_same_v<T, std::string>) return "a string";
  return "a list";
}

}  // namespace

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ConfigError(fmt::format("config key '{}' must be a mapping", path.empty() ? "<root>" : path));
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(fmt::format("unknown config key '{}'", join(path, key)));
  }
}

template <class T>
bool read(const YAML::Node& node, const std::string& path, const char* key, T& out) {
  const YAML::Node v = node[key];
  if (!v) return false;
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.IsScalar()) throw YAML::Exception(v.Mark(), "not a scalar");
    }
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("config key '{}' must be {}", join(path, key), type_name<T>()));
  }
  return true;
}

template bool read<int>(const YAML::Node&, const std::string&, const char*, int&);
template bool read<double>(const YAML::Node&, const std::string&, const char*, double&);
template bool read<bool>(const YAML::Node&, const std::string&, const char*, bool&);
template bool read<std::string>(const YAML::Node&, const std::string&, const char*, std::string&);
template bool read<std::uint64_t>(const YAML::Node&, const std::string&, const char*, std::uint64_t&);
template bool read<std::vector<int>>(const YAML::Node&, const std::string&, const char*, std::vector<int>&);
template bool read<std::array<double, 3>>(const YAML::Node&, const std::string&, const char*,
                                          std::array<double, 3>&);

namespace {

template <class Enum, class Parse>
void read_enum(const YAML::Node& node, const std::string& path, const char* key, Enum& out, Parse parse) {
  std::string text;
  if (!read(node, path, key, text)) return;
  try {
    out = parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("config key '{}': {}", join(path, key), e.what()));
  }
}

YAML::Node section(const YAML::Node& node, const char* key) { return node[key]; }

}  // namespace

NetworkConfig read_network(const YAML::Node& node, const std::string& path) {
  NetworkConfig c;
  check_keys(node, path, {"encoder", "decoder", "normalization"});
  if (const auto enc = section(node, "encoder")) {
    const auto p = join(path, "encoder");
    check_keys(enc, p, {"stage_depths", "base_width", "temporal_strides", "channel_separated", "stem_temporal_stride"});
    read(enc, p, "stage_depths", c.encoder.stage_depths);
    read(enc, p, "base_width", c.encoder.base_width);
    read(enc, p, "temporal_strides", c.encoder.temporal_strides);
    read(enc, p, "channel_separated", c.encoder.channel_separated);
    read(enc, p, "stem_temporal_stride", c.encoder.stem_temporal_stride);
  }
  if (const auto dec = section(node, "decoder")) {
    const auto p = join(path, "decoder");
    check_keys(dec, p,
               {"bridge", "refine", "channels", "gc_kernel", "gc_boundary_refinement", "final_upsample_factor", "head"});
    read_enum(dec, p, "bridge", c.decoder.bridge, parse_bridge_kind);
    read_enum(dec, p, "refine", c.decoder.refine, parse_refine_kind);
    read(dec, p, "channels", c.decoder.channels);
    read(dec, p, "gc_kernel", c.decoder.gc_kernel);
    read(dec, p, "gc_boundary_refinement", c.decoder.gc_boundary_refinement);
    read(dec, p, "final_upsample_factor", c.decoder.final_upsample_factor);
    read_enum(dec, p, "head", c.decoder.head, parse_head_kind);
  }
  if (const auto norm = section(node, "normalization")) {
    const auto p = join(path, "normalization");
    check_keys(norm, p, {"mean", "std"});
    read(norm, p, "mean", c.normalization.mean);
    read(norm, p, "std", c.normalization.std);
  }
  c.validate();
  return c;
}

TrainConfig read_train(const YAML::Node& node, const std::string& path, TrainPresence* presence) {
  TrainConfig c;
  check_keys(node, path,
             {"initial_lr", "decay_gamma", "epochs", "batch_size", "clip_length", "max_span", "stage", "loss", "seed",
              "iterations_per_epoch", "adam_beta1", "adam_beta2", "adam_epsilon"});
  read(node, path, "initial_lr", c.initial_lr);
  read(node, path, "decay_gamma", c.decay_gamma);
  read(node, path, "epochs", c.epochs);
  read(node, path, "batch_size", c.batch_size);
  const bool has_clip = read(node, path, "clip_length", c.clip_length);
  read(node, path, "max_span", c.max_span);
  read_enum(node, path, "stage", c.stage, parse_train_stage);
  const bool has_loss = static_cast<bool>(node["loss"]);
  read_enum(node, path, "loss", c.loss, parse_loss_kind);
  read(node, path, "seed", c.seed);
  read(node, path, "iterations_per_epoch", c.iterations_per_epoch);
  read(node, path, "adam_beta1", c.adam_beta1);
  read(node, path, "adam_beta2", c.adam_beta2);
  read(node, path, "adam_epsilon", c.adam_epsilon);
  if (presence) *presence = {has_clip, has_loss};
  return c;
}

void emit_network(YAML::Emitter& out, const NetworkConfig& c) {
  out << YAML::BeginMap;
  out << YAML::Key << "encoder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "stage_depths" << YAML::Value << YAML::Flow << c.encoder.stage_depths;
  out << YAML::Key << "base_width" << YAML::Value << c.encoder.base_width;
  out << YAML::Key << "temporal_strides" << YAML::Value << YAML::Flow << c.encoder.temporal_strides;
  out << YAML::Key << "channel_separated" << YAML::Value << c.encoder.channel_separated;
  out << YAML::Key << "stem_temporal_stride" << YAML::Value << c.encoder.stem_temporal_stride;
  out << YAML::EndMap;
  out << YAML::Key << "decoder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "bridge" << YAML::Value << to_string(c.decoder.bridge);
  out << YAML::Key << "refine" << YAML::Value << to_string(c.decoder.refine);
  out << YAML::Key << "channels" << YAML::Value << YAML::Flow << c.decoder.channels;
  out << YAML::Key << "gc_kernel" << YAML::Value << c.decoder.gc_kernel;
  out << YAML::Key << "gc_boundary_refinement" << YAML::Value << c.decoder.gc_boundary_refinement;
  out << YAML::Key << "final_upsample_factor" << YAML::Value << c.decoder.final_upsample_factor;
  out << YAML::Key << "head" << YAML::Value << to_string(c.decoder.head);
  out << YAML::EndMap;
  out << YAML::Key << "normalization" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mean" << YAML::Value << YAML::Flow
      << std::vector<double>(c.normalization.mean.begin(), c.normalization.mean.end());
  out << YAML::Key << "std" << YAML::Value << YAML::Flow
      << std::vector<double>(c.normalization.std.begin(), c.normalization.std.end());
  out << YAML::EndMap;
  out << YAML::EndMap;
}

void emit_train(YAML::Emitter& out, const TrainConfig& c) {
  out << YAML::BeginMap;
  out << YAML::Key << "initial_lr" << YAML::Value << c.initial_lr;
  out << YAML::Key << "decay_gamma" << YAML::Value << c.decay_gamma;
  out << YAML::Key << "epochs" << YAML::Value << c.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << c.batch_size;
  out << YAML::Key << "clip_length" << YAML::Value << c.clip_length;
  out << YAML::Key << "max_span" << YAML::Value << c.max_span;
  out << YAML::Key << "stage" << YAML::Value << to_string(c.stage);
  out << YAML::Key << "loss" << YAML::Value << to_string(c.loss);
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "iterations_per_epoch" << YAML::Value << c.iterations_per_epoch;
  out << YAML::Key << "adam_beta1" << YAML::Value << c.adam_beta1;
  out << YAML::Key << "adam_beta2" << YAML::Value << c.adam_beta2;
  out << YAML::Key << "adam_epsilon" << YAML::Value << c.adam_epsilon;
  out << YAML::EndMap;
}

YAML::Node load(const std::string& text, const std::string& what) {
  try {
    YAML::Node root = YAML::Load(text);
    if (root.IsNull()) return YAML::Node(YAML::NodeType::Map);
    return root;
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("malformed {} at line {}, column {}: {}", what, e.mark.line + 1, e.mark.column + 1,
                                  e.msg));
  }
}

}  // namespace yaml_sections

namespace {

using namespace yaml_sections;

std::optional<DatasetSpec> read_dataset(const YAML::Node& node, const std::string& path,
                                        const std::filesystem::path& base_dir, LayoutKind default_layout) {
  if (!node) return std::nullopt;
  check_keys(node, path, {"root", "layout", "split"});
  DatasetSpec spec;
  spec.layout = default_layout;
  std::string root;
  if (!read(node, path, "root", root) || root.empty()) {
    throw ConfigError(fmt::format("config key '{}.root' is required", path));
  }
  spec.root = std::filesystem::path(root);
  if (spec.root.is_relative() && !base_dir.empty()) spec.root = (base_dir / spec.root).lexically_normal();
  std::string layout;
  if (read(node, path, "layout", layout)) {
    try {
      spec.layout = parse_layout_kind(layout);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config key '{}.layout': {}", path, e.what()));
    }
  }
  read(node, path, "split", spec.split);
  return spec;
}

void emit_dataset(YAML::Emitter& out, const char* key, const std::optional<DatasetSpec>& spec) {
  if (!spec) return;
  out << YAML::Key << key << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "root" << YAML::Value << spec->root.string();
  out << YAML::Key << "layout" << YAML::Value << to_string(spec->layout);
  out << YAML::Key << "split" << YAML::Value << spec->split;
  out << YAML::EndMap;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  const YAML::Node root = load(text, "config");
  check_keys(root, "", {"model", "schedule", "train", "synth", "data"});
  RunConfig c;
  if (root["model"]) c.model = read_network(root["model"], "model");
  if (const auto s = root["schedule"]) {
    check_keys(s, "schedule", {"clip_length", "overlap"});
    read(s, "schedule", "clip_length", c.schedule.clip_length);
    read(s, "schedule", "overlap", c.schedule.overlap);
  }
  TrainPresence presence;
  if (root["train"]) c.train = read_train(root["train"], "train", &presence);
  if (!presence.clip_length) c.train.clip_length = c.schedule.clip_length;
  if (!presence.loss) {
    c.train.loss = c.model.decoder.head == HeadKind::Sigmoid ? LossKind::BinaryCrossEntropy
                                                              : LossKind::TwoClassCrossEntropy;
  }
  if (const auto s = root["synth"]) {
    check_keys(s, "synth",
               {"rotation_deg", "translation_frac", "scale_min", "scale_max", "shear_deg", "grid_points", "jitter_frac"});
    read(s, "synth", "rotation_deg", c.synth.rotation_deg);
    read(s, "synth", "translation_frac", c.synth.translation_frac);
    read(s, "synth", "scale_min", c.synth.scale_min);
    read(s, "synth", "scale_max", c.synth.scale_max);
    read(s, "synth", "shear_deg", c.synth.shear_deg);
    read(s, "synth", "grid_points", c.synth.grid_points);
    read(s, "synth", "jitter_frac", c.synth.jitter_frac);
  }
  if (const auto d = root["data"]) {
    check_keys(d, "data", {"images", "video"});
    c.data.images = read_dataset(d["images"], "data.images", base_dir, LayoutKind::ImageInstances);
    c.data.video = read_dataset(d["video"], "data.video", base_dir, LayoutKind::Davis);
  }
  c.validate();
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("config file not found: {}", path.string()));
  std::stringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), std::filesystem::absolute(path).parent_path());
}

std::string serialize_config(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "model" << YAML::Value;
  emit_network(out, c.model);
  out << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "clip_length" << YAML::Value << c.schedule.clip_length;
  out << YAML::Key << "overlap" << YAML::Value << c.schedule.overlap;
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value;
  emit_train(out, c.train);
  out << YAML::Key << "synth" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rotation_deg" << YAML::Value << c.synth.rotation_deg;
  out << YAML::Key << "translation_frac" << YAML::Value << c.synth.translation_frac;
  out << YAML::Key << "scale_min" << YAML::Value << c.synth.scale_min;
  out << YAML::Key << "scale_max" << YAML::Value << c.synth.scale_max;
  out << YAML::Key << "shear_deg" << YAML::Value << c.synth.shear_deg;
  out << YAML::Key << "grid_points" << YAML::Value << c.synth.grid_points;
  out << YAML::Key << "jitter_frac" << YAML::Value << c.synth.jitter_frac;
  out << YAML::EndMap;
  if (c.data.images || c.data.video) {
    out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
    emit_dataset(out, "images", c.data.images);
    emit_dataset(out, "video", c.data.video);
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string serialize_network_config(const NetworkConfig& config) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  emit_network(out, config);
  return std::string(out.c_str()) + "\n";
}

NetworkConfig parse_network_config(const std::string& text) { return read_network(load(text, "model config"), "model"); }

}  // namespace vsod
