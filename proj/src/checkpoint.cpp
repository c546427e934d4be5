#include "vsod/checkpoint.hpp"

#include <cereal/archives/binary.hpp>
#include <cereal/types/map.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <fmt/format.h>
#include <fstream>
#include <random>
#include <sstream>

#include "vsod/errors.hpp"
#include "yaml_sections.hpp"

namespace vsod {

namespace fs = std::filesystem;

namespace {

struct StoredParameter {
  std::vector<int> shape;
  std::vector<double> value;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(shape, value);
  }
};

struct StoredMoments {
  std::vector<double> m;
  std::vector<double> v;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(m, v);
  }
};

std::string manifest_text(const CheckpointMeta& meta) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "format_version" << YAML::Value << meta.format_version;
  out << YAML::Key << "fingerprint" << YAML::Value << YAML::DoubleQuoted << meta.fingerprint;
  out << YAML::Key << "epoch" << YAML::Value << meta.epoch;
  out << YAML::Key << "optimizer_state" << YAML::Value << YAML::DoubleQuoted << meta.optimizer_state;
  out << YAML::Key << "metrics" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : meta.metrics) out << YAML::Key << k << YAML::Value << v;
  out << YAML::EndMap;
  out << YAML::Key << "model" << YAML::Value;
  yaml_sections::emit_network(out, meta.network);
  out << YAML::Key << "train" << YAML::Value;
  yaml_sections::emit_train(out, meta.train);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_sibling(const fs::path& dir, const char* tag) {
  std::random_device rd;
  return dir.parent_path() / fmt::format(".{}.{}-{:08x}", dir.filename().string(), tag, rd());
}

}  // namespace

void save_checkpoint(const fs::path& dir, const SegmentationNetwork& model, CheckpointMeta meta,
                     const Adam* optimizer) {
  if (dir.empty()) throw InvalidArgument("checkpoint directory is empty");
  const fs::path target = fs::absolute(dir);
  fs::create_directories(target.parent_path());
  meta.fingerprint = model.architecture_fingerprint();
  meta.network = model.config();
  meta.optimizer_state = optimizer ? kOptimizerFile : "";

  const fs::path tmp = temp_sibling(target, "tmp");
  fs::create_directories(tmp);
  try {
    std::map<std::string, StoredParameter> weights;
    for_each_parameter(model, [&](const std::string& path, const Parameter& p) {
      weights.emplace(path, StoredParameter{p.shape, p.value});
    });
    {
      std::ofstream out(tmp / kWeightsFile, std::ios::binary);
      if (!out) throw IoError(fmt::format("cannot write {}", (tmp / kWeightsFile).string()));
      cereal::BinaryOutputArchive ar(out);
      ar(weights);
    }
    if (optimizer) {
      std::map<std::string, StoredMoments> moments;
      for (const auto& [k, mo] : optimizer->moments()) moments.emplace(k, StoredMoments{mo.m, mo.v});
      std::ofstream out(tmp / kOptimizerFile, std::ios::binary);
      if (!out) throw IoError(fmt::format("cannot write {}", (tmp / kOptimizerFile).string()));
      cereal::BinaryOutputArchive ar(out);
      ar(static_cast<std::uint64_t>(optimizer->steps()), moments);
    }
    {
      std::ofstream out(tmp / kManifestFile);
      if (!out) throw IoError(fmt::format("cannot write {}", (tmp / kManifestFile).string()));
      out << manifest_text(meta);
    }
    if (fs::exists(target)) {
      const fs::path old = temp_sibling(target, "old");
      fs::rename(target, old);
      fs::rename(tmp, target);
      fs::remove_all(old);
    } else {
      fs::rename(tmp, target);
    }
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

CheckpointMeta read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  if (!fs::exists(path)) throw IoError(fmt::format("checkpoint manifest not found: {}", path.string()));
  const YAML::Node root = yaml_sections::load(read_file(path), "checkpoint manifest");
  yaml_sections::check_keys(root, "", {"format_version", "fingerprint", "epoch", "optimizer_state", "metrics", "model",
                                       "train"});
  CheckpointMeta meta;
  yaml_sections::read(root, "", "format_version", meta.format_version);
  if (meta.format_version != kCheckpointFormatVersion) {
    throw ConfigError(fmt::format("checkpoint format version {} is not supported (expected {})", meta.format_version,
                                  kCheckpointFormatVersion));
  }
  yaml_sections::read(root, "", "fingerprint", meta.fingerprint);
  yaml_sections::read(root, "", "epoch", meta.epoch);
  yaml_sections::read(root, "", "optimizer_state", meta.optimizer_state);
  if (const auto m = root["metrics"]) {
    if (!m.IsMap()) throw ConfigError("config key 'metrics' must be a mapping");
    for (const auto& kv : m) {
      const auto key = kv.first.as<std::string>();
      double v = 0.0;
      yaml_sections::read(m, "metrics", key.c_str(), v);
      meta.metrics[key] = v;
    }
  }
  if (!root["model"]) throw ConfigError("checkpoint manifest has no model section");
  meta.network = yaml_sections::read_network(root["model"], "model");
  if (root["train"]) meta.train = yaml_sections::read_train(root["train"], "train");
  return meta;
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, Adam* optimizer) {
  LoadedCheckpoint out{read_manifest(dir), {}};
  out.model = SegmentationNetwork(out.meta.network);
  const std::string fingerprint = out.model.architecture_fingerprint();
  if (fingerprint != out.meta.fingerprint) {
    throw ConfigError(fmt::format("checkpoint fingerprint {} does not match the configured architecture {}",
                                  out.meta.fingerprint, fingerprint));
  }

  std::map<std::string, StoredParameter> weights;
  {
    std::ifstream in(dir / kWeightsFile, std::ios::binary);
    if (!in) throw IoError(fmt::format("checkpoint weights not found: {}", (dir / kWeightsFile).string()));
    try {
      cereal::BinaryInputArchive ar(in);
      ar(weights);
    } catch (const cereal::Exception& e) {
      throw IoError(fmt::format("corrupt weights archive {}: {}", (dir / kWeightsFile).string(), e.what()));
    }
  }
  std::size_t used = 0;
  out.model.visit_parameters("", [&](const std::string& path, Parameter& p) {
    const auto it = weights.find(path);
    if (it == weights.end()) throw ConfigError(fmt::format("weights archive has no entry for {}", path));
    if (it->second.shape != p.shape || it->second.value.size() != p.size()) {
      throw ConfigError(fmt::format("weights for {} have the wrong shape", path));
    }
    p.value = it->second.value;
    ++used;
  });
  if (used != weights.size()) {
    throw ConfigError(fmt::format("weights archive has {} entries but the network has {}", weights.size(), used));
  }

  if (optimizer && !out.meta.optimizer_state.empty()) {
    std::ifstream in(dir / out.meta.optimizer_state, std::ios::binary);
    if (!in) throw IoError(fmt::format("optimizer state not found in {}", dir.string()));
    std::uint64_t steps = 0;
    std::map<std::string, StoredMoments> stored;
    try {
      cereal::BinaryInputArchive ar(in);
      ar(steps, stored);
    } catch (const cereal::Exception& e) {
      throw IoError(fmt::format("corrupt optimizer state: {}", e.what()));
    }
    std::map<std::string, Adam::Moments> moments;
    for (auto& [k, s] : stored) moments.emplace(k, Adam::Moments{std::move(s.m), std::move(s.v)});
    optimizer->restore(steps, std::move(moments));
  }
  return out;
}

}  // namespace vsod
