#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vsod/config.hpp"
#include "vsod/core_types.hpp"
#include "vsod/train.hpp"

namespace vsod {

/// Reads an 8-bit colour image as a single-frame RGB clip.
Video8 read_image(const std::filesystem::path& path);
/// Writes frame `t` of a clip as an 8-bit colour image.
void write_image(const std::filesystem::path& path, const Video8& clip, int t = 0);

/// Any nonzero pixel is foreground.
BinaryMask read_mask(const std::filesystem::path& path);
/// Foreground 255, background 0, single channel.
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// 32-bit float single-channel TIFF.
void write_probability_map(const std::filesystem::path& path, const FloatMap& map);
FloatMap read_probability_map(const std::filesystem::path& path);

/// Image files (jpg, jpeg, png) directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Reads a directory of numbered frames into one clip; every frame must
/// have the same size.
Video8 read_frames(const std::filesystem::path& dir);

struct SequenceData {
  std::string name;
  Video8 frames;
  std::vector<std::string> frame_stems;
  /// One entry per frame; nullopt where a sparse layout has no annotation.
  std::vector<std::optional<BinaryMask>> annotations;

  /// Dense masks; throws if any frame lacks an annotation.
  MaskSequence dense_masks() const;
};

/// Sequence names from `<root>/<split>` (one per line) or, when `split` is
/// empty, every directory under `<root>/JPEGImages`.
std::vector<std::string> list_sequences(const std::filesystem::path& root, const std::string& split = {});

/// `<root>/JPEGImages/<seq>/<NNNNN>.jpg` with `<root>/Annotations/<seq>/<NNNNN>.png`.
/// The davis layout requires an annotation per frame; sparse allows gaps.
SequenceData read_sequence(const std::filesystem::path& root, const std::string& name, LayoutKind layout,
                           bool load_frames = true);
std::vector<SequenceData> read_dataset(const DatasetSpec& spec, bool load_frames = true);

/// `<root>/images/<name>.{jpg,png}` with `<root>/masks/<name>/*.png`, one
/// binary mask per instance.
std::vector<InstanceImage> read_image_instances(const DatasetSpec& spec);

struct NamedMask {
  std::string stem;
  BinaryMask mask;
};
/// Every png mask inside `dir`, sorted by name.
std::vector<NamedMask> read_mask_directory(const std::filesystem::path& dir);

}  // namespace vsod
