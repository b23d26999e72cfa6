#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pointseg/types.hpp"

namespace pointseg::post {

/// Plane {p : n . p + d = 0} with unit normal, oriented so nz >= 0.
struct PlaneModel {
  double nx = 0, ny = 0, nz = 1;
  double d = 0;

  double distance(const Point& p) const { return nx * p.x + ny * p.y + nz * p.z + d; }
};

struct RansacConfig {
  int iterations = 100;
  double threshold = 0.15;    // meters
  double min_fraction = 0.2;  // of the cloud, to accept a plane in refine()
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlaneFit {
  PlaneModel plane;
  std::vector<std::size_t> inliers;  // ascending
};

/// Best 3-point hypothesis by inlier count; ties go to the earlier iteration.
/// Throws DataError("degenerate input") for fewer than 3 points or when every
/// sample is collinear.
PlaneFit ransac_plane(std::span<const Point> points, const RansacConfig& cfg);

struct RefineResult {
  LabeledCloud cloud;
  bool warning = false;
  std::string message;
};

/// Fits the ground plane over the whole cloud and relabels foreground points
/// lying on it as background. If no plane covers min_fraction of the cloud
/// the input is returned unchanged with warning set.
RefineResult refine(const LabeledCloud& cloud, const RansacConfig& cfg);

}  // namespace pointseg::post
