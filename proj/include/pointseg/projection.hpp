#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pointseg/tensor.hpp"
#include "pointseg/types.hpp"

namespace pointseg::proj {

/// Spherical image geometry. Rows span the vertical (elevation) angle from
/// azimuth_max at row 0 down to azimuth_min; columns span the horizontal
/// angle from zenith_min at column 0 to zenith_max. Angles in degrees.
struct ProjectionConfig {
  int height = 64;
  int width = 512;
  double azimuth_min = -24.9;  // HDL-64E lower field of view
  double azimuth_max = 2.0;
  double zenith_min = -45.0;
  double zenith_max = 45.0;

  double row_resolution() const { return (azimuth_max - azimuth_min) / height; }
  double col_resolution() const { return (zenith_max - zenith_min) / width; }
  void validate() const;
};

enum FrameChannel : std::size_t { kX = 0, kY = 1, kZ = 2, kIntensity = 3, kRange = 4, kFrameChannels = 5 };

/// A projected scan: H x W x 5 channels (x, y, z, intensity, range) plus the
/// index of the point stored in each pixel (-1 where empty).
struct SphericalFrame {
  Tensor channels;
  std::vector<std::uint8_t> occupancy;
  std::vector<std::int32_t> source_index;
  std::optional<ClassMap> labels;

  std::size_t height() const { return channels.height(); }
  std::size_t width() const { return channels.width(); }
  bool occupied(std::size_t r, std::size_t c) const { return occupancy[r * width() + c] != 0; }
};

/// Pixel a point falls into, or nullopt when it is outside the configured
/// spans, behind the sensor (x <= 0), or at the origin.
struct PixelIndex {
  int row;
  int col;
};
std::optional<PixelIndex> pixel_of(const Point& p, const ProjectionConfig& cfg);

/// Projects a cloud. On pixel collisions the nearer point wins; exact range
/// ties keep the first point seen. Throws DataError("no projectable points")
/// when nothing lands in the image.
SphericalFrame project(const PointCloud& cloud, const ProjectionConfig& cfg = {});

/// As project(), additionally filling frame.labels from the winning points.
SphericalFrame project_labeled(const LabeledCloud& cloud, const ProjectionConfig& cfg = {});

/// Assigns every point the class of the pixel it was stored in; points that
/// were discarded or lost a collision become background.
LabeledCloud backproject(const SphericalFrame& frame, const ClassMap& class_map, const PointCloud& cloud);

/// Builds a labeled frame from an H x W x 6 record (x, y, z, intensity,
/// range, label). Occupied pixels are those with range > 0; their
/// source_index counts occupied pixels in row-major order, matching
/// cloud_from_frame().
SphericalFrame frame_from_dataset(const Tensor& record);

/// The points stored in a frame, in row-major pixel order.
PointCloud cloud_from_frame(const SphericalFrame& frame);

/// Inverse of frame_from_dataset: H x W x 6 with the label channel (zero if
/// the frame is unlabeled).
Tensor frame_to_record(const SphericalFrame& frame);

}  // namespace pointseg::proj
