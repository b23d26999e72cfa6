#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pointseg/tensor.hpp"
#include "pointseg/types.hpp"

namespace pointseg::io {

namespace fs = std::filesystem;

/// Little-endian float32 quadruples (x, y, z, intensity).
PointCloud load_velodyne_bin(const fs::path& path);
void save_velodyne_bin(const PointCloud& cloud, const fs::path& path);

/// Array container v1.0 (magic 0x93 "NUMPY"). Accepts little-endian float32
/// or float64 data in C order; the shape must equal `expected`.
Tensor load_frame_array(const fs::path& path, const Shape& expected = {64, 512, 6});
/// Writes float32, C order, v1.0 header padded to a 64-byte boundary.
void save_frame_array(const Tensor& array, const fs::path& path);

enum class Split { Train, Val };

/// Deterministic split by filename: FNV-1a(name) % 100 < 74 -> train.
Split split_of(const std::string& filename);

struct DatasetIndex {
  std::vector<fs::path> frames;  // sorted
  std::vector<Split> splits;
  std::uint64_t seed = 0;

  /// Every *.npy file directly inside `dir`.
  static DatasetIndex scan(const fs::path& dir, std::uint64_t seed = 0);
  std::vector<fs::path> subset(Split split) const;
};

/// Shuffled groups of indices 0..count-1 of size `batch_size`; the order
/// depends only on (seed, epoch) and the final partial group is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch);

/// batch_indices applied to a list of frames.
std::vector<std::vector<fs::path>> batches(std::span<const fs::path> frames, std::size_t batch_size,
                                           std::uint64_t seed, std::uint64_t epoch);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// background black, car blue, pedestrian green, cyclist red
Rgb class_color(int id);

/// Binary P6 image, one pixel per cell: image x = column, y = row.
void save_ppm(const fs::path& path, std::size_t width, std::size_t height, std::span<const Rgb> pixels);
void save_class_map_image(const ClassMap& map, const fs::path& path);
/// Grayscale preview of the range channel of an H x W x C frame, scaled to
/// the frame's maximum range.
void save_range_image(const Tensor& channels, std::size_t range_channel, const fs::path& path);

/// One "x y z label" line per point. Intensity is not stored and reads back as 0.
void save_labeled_cloud(const LabeledCloud& cloud, const fs::path& path);
LabeledCloud load_labeled_cloud(const fs::path& path);

}  // namespace pointseg::io
