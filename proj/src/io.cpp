#include "vsod/io.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "vsod/errors.hpp"

namespace vsod {

namespace fs = std::filesystem;

namespace {

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_or_throw(const fs::path& path, const cv::Mat& mat) {
  ensure_parent(path);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError(fmt::format("cannot write {}: {}", path.string(), e.what()));
  }
  if (!ok) throw IoError(fmt::format("cannot write {}", path.string()));
}

cv::Mat read_or_throw(const fs::path& path, int flags) {
  if (!fs::exists(path)) throw IoError(fmt::format("file not found: {}", path.string()));
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw IoError(fmt::format("cannot decode image {}", path.string()));
  return m;
}

}  // namespace

Video8 read_image(const fs::path& path) {
  const cv::Mat bgr = read_or_throw(path, cv::IMREAD_COLOR);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  std::size_t i = 0;
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      data[i++] = row[x][2];
      data[i++] = row[x][1];
      data[i++] = row[x][0];
    }
  }
  return Video8(1, bgr.rows, bgr.cols, std::move(data));
}

void write_image(const fs::path& path, const Video8& clip, int t) {
  if (t < 0 || t >= clip.frames()) throw InvalidArgument(fmt::format("frame {} out of range", t));
  cv::Mat bgr(clip.height(), clip.width(), CV_8UC3);
  for (int y = 0; y < clip.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < clip.width(); ++x) {
      row[x] = cv::Vec3b(clip.at(t, y, x, 2), clip.at(t, y, x, 1), clip.at(t, y, x, 0));
    }
  }
  write_or_throw(path, bgr);
}

BinaryMask read_mask(const fs::path& path) {
  const cv::Mat m = read_or_throw(path, cv::IMREAD_GRAYSCALE);
  BinaryMask out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) out.at(y, x) = row[x] != 0 ? 1 : 0;
  }
  return out;
}

void write_mask(const fs::path& path, const BinaryMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  write_or_throw(path, m);
}

void write_probability_map(const fs::path& path, const FloatMap& map) {
  cv::Mat m(map.height, map.width, CV_32FC1);
  for (int y = 0; y < map.height; ++y) {
    auto* row = m.ptr<float>(y);
    for (int x = 0; x < map.width; ++x) row[x] = static_cast<float>(map.at(y, x));
  }
  write_or_throw(path, m);
}

FloatMap read_probability_map(const fs::path& path) {
  const cv::Mat m = read_or_throw(path, cv::IMREAD_UNCHANGED);
  if (m.type() != CV_32FC1) throw IoError(fmt::format("{} is not a single-channel float image", path.string()));
  FloatMap out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<float>(y);
    for (int x = 0; x < m.cols; ++x) out.at(y, x) = row[x];
  }
  return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("directory not found: {}", dir.string()));
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && has_extension(e.path(), {".jpg", ".jpeg", ".png"})) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Video8 read_frames(const fs::path& dir) {
  const auto files = list_images(dir);
  if (files.empty()) throw IoError(fmt::format("no frames in {}", dir.string()));
  std::vector<std::uint8_t> data;
  int h = 0, w = 0;
  for (const auto& f : files) {
    const Video8 img = read_image(f);
    if (data.empty()) {
      h = img.height();
      w = img.width();
      data.reserve(img.frame_size() * files.size());
    } else if (img.height() != h || img.width() != w) {
      throw IoError(fmt::format("frame {} is {}x{} but earlier frames are {}x{}", f.string(), img.height(),
                                img.width(), h, w));
    }
    data.insert(data.end(), img.values().begin(), img.values().end());
  }
  return Video8(static_cast<int>(files.size()), h, w, std::move(data));
}

MaskSequence SequenceData::dense_masks() const {
  std::vector<BinaryMask> masks;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (!annotations[i]) {
      throw InvalidArgument(fmt::format("sequence {} frame {} has no annotation", name, frame_stems[i]));
    }
    masks.push_back(*annotations[i]);
  }
  return MaskSequence(std::span<const BinaryMask>(masks));
}

std::vector<std::string> list_sequences(const fs::path& root, const std::string& split) {
  std::vector<std::string> names;
  if (!split.empty()) {
    std::ifstream in(root / split);
    if (!in) throw IoError(fmt::format("sequence list not found: {}", (root / split).string()));
    std::string line;
    while (std::getline(in, line)) {
      line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }),
                 line.end());
      if (!line.empty()) names.push_back(line);
    }
  } else {
    const fs::path images = root / "JPEGImages";
    if (!fs::is_directory(images)) throw IoError(fmt::format("directory not found: {}", images.string()));
    for (const auto& e : fs::directory_iterator(images)) {
      if (e.is_directory()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
  }
  if (names.empty()) throw IoError(fmt::format("no sequences under {}", root.string()));
  return names;
}

SequenceData read_sequence(const fs::path& root, const std::string& name, LayoutKind layout, bool load_frames) {
  if (layout == LayoutKind::ImageInstances) throw InvalidArgument("image-instances is not a sequence layout");
  SequenceData seq;
  seq.name = name;
  const fs::path frames_dir = root / "JPEGImages" / name;
  for (const auto& f : list_images(frames_dir)) seq.frame_stems.push_back(f.stem().string());
  if (seq.frame_stems.empty()) throw IoError(fmt::format("no frames in {}", frames_dir.string()));
  if (load_frames) seq.frames = read_frames(frames_dir);

  const fs::path ann_dir = root / "Annotations" / name;
  std::size_t found = 0;
  for (const auto& stem : seq.frame_stems) {
    const fs::path p = ann_dir / (stem + ".png");
    if (fs::exists(p)) {
      seq.annotations.emplace_back(read_mask(p));
      ++found;
    } else if (layout == LayoutKind::Davis) {
      throw IoError(fmt::format("annotation missing: {}", p.string()));
    } else {
      seq.annotations.emplace_back(std::nullopt);
    }
  }
  if (found == 0) throw IoError(fmt::format("sequence {} has no annotations", name));
  return seq;
}

std::vector<SequenceData> read_dataset(const DatasetSpec& spec, bool load_frames) {
  std::vector<SequenceData> out;
  for (const auto& name : list_sequences(spec.root, spec.split)) {
    out.push_back(read_sequence(spec.root, name, spec.layout, load_frames));
  }
  return out;
}

std::vector<InstanceImage> read_image_instances(const DatasetSpec& spec) {
  const fs::path images = spec.root / "images";
  std::vector<InstanceImage> out;
  for (const auto& f : list_images(images)) {
    InstanceImage item;
    item.name = f.stem().string();
    item.image = read_image(f);
    const fs::path mask_dir = spec.root / "masks" / item.name;
    for (const auto& m : list_images(mask_dir)) item.instances.push_back(read_mask(m));
    if (item.instances.empty()) throw IoError(fmt::format("image {} has no instance masks", item.name));
    for (const auto& m : item.instances) {
      if (m.height != item.image.height() || m.width != item.image.width()) {
        throw IoError(fmt::format("instance mask for {} does not match the image size", item.name));
      }
    }
    out.push_back(std::move(item));
  }
  if (out.empty()) throw IoError(fmt::format("no images in {}", images.string()));
  return out;
}

std::vector<NamedMask> read_mask_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("directory not found: {}", dir.string()));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && has_extension(e.path(), {".png"})) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedMask> out;
  for (const auto& f : files) out.push_back({f.stem().string(), read_mask(f)});
  return out;
}

}  // namespace vsod
