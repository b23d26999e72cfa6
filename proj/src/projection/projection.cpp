#include "pointseg/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pointseg/error.hpp"

namespace pointseg::proj {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Winner {
  double range = std::numeric_limits<double>::infinity();
  std::int32_t index = -1;
};

std::vector<Winner> assign_pixels(const std::vector<Point>& points, const ProjectionConfig& cfg) {
  cfg.validate();
  std::vector<Winner> grid(static_cast<std::size_t>(cfg.height) * cfg.width);
  bool any = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    const auto px = pixel_of(p, cfg);
    if (!px) continue;
    const double d = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
    Winner& w = grid[static_cast<std::size_t>(px->row) * cfg.width + px->col];
    if (d < w.range) {
      w.range = d;
      w.index = static_cast<std::int32_t>(i);
    }
    any = true;
  }
  if (!any) throw DataError("no projectable points");
  return grid;
}

SphericalFrame build_frame(const std::vector<Point>& points, const std::vector<Winner>& grid,
                           const ProjectionConfig& cfg) {
  SphericalFrame f;
  f.channels = Tensor::feature_map(cfg.height, cfg.width, kFrameChannels);
  f.occupancy.assign(grid.size(), 0);
  f.source_index.assign(grid.size(), -1);
  for (std::size_t px = 0; px < grid.size(); ++px) {
    if (grid[px].index < 0) continue;
    const Point& p = points[static_cast<std::size_t>(grid[px].index)];
    float* ch = &f.channels[px * kFrameChannels];
    ch[kX] = p.x;
    ch[kY] = p.y;
    ch[kZ] = p.z;
    ch[kIntensity] = p.intensity;
    ch[kRange] = static_cast<float>(grid[px].range);
    f.occupancy[px] = 1;
    f.source_index[px] = grid[px].index;
  }
  return f;
}

}  // namespace

void ProjectionConfig::validate() const {
  if (height < 1 || width < 1) throw ShapeError("projection: image extents must be positive");
  if (!(azimuth_max > azimuth_min)) throw ShapeError("projection: azimuth_max must exceed azimuth_min");
  if (!(zenith_max > zenith_min)) throw ShapeError("projection: zenith_max must exceed zenith_min");
  if (zenith_min < -90.0 || zenith_max > 90.0) throw ShapeError("projection: zenith span must lie within [-90, 90]");
}

std::optional<PixelIndex> pixel_of(const Point& p, const ProjectionConfig& cfg) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) return std::nullopt;
  // arcsin(y / rho) folds the rear hemisphere onto the front one.
  if (!(p.x > 0.0f)) return std::nullopt;
  const double x = p.x, y = p.y, z = p.z;
  const double rho = std::sqrt(x * x + y * y);
  const double d = std::sqrt(x * x + y * y + z * z);
  const double alpha = std::asin(z / d) * kRadToDeg;
  const double beta = std::asin(y / rho) * kRadToDeg;
  if (alpha < cfg.azimuth_min || alpha > cfg.azimuth_max) return std::nullopt;
  if (beta < cfg.zenith_min || beta > cfg.zenith_max) return std::nullopt;
  const int row = static_cast<int>(std::floor((cfg.azimuth_max - alpha) / cfg.row_resolution()));
  const int col = static_cast<int>(std::floor((beta - cfg.zenith_min) / cfg.col_resolution()));
  return PixelIndex{std::clamp(row, 0, cfg.height - 1), std::clamp(col, 0, cfg.width - 1)};
}

SphericalFrame project(const PointCloud& cloud, const ProjectionConfig& cfg) {
  const auto grid = assign_pixels(cloud.points, cfg);
  return build_frame(cloud.points, grid, cfg);
}

SphericalFrame project_labeled(const LabeledCloud& cloud, const ProjectionConfig& cfg) {
  if (cloud.labels.size() != cloud.points.size()) throw DataError("labeled cloud: label count != point count");
  for (auto l : cloud.labels) {
    if (l >= kNumClasses) throw DataError("labeled cloud: class id " + std::to_string(l) + " out of range");
  }
  const auto grid = assign_pixels(cloud.points, cfg);
  SphericalFrame f = build_frame(cloud.points, grid, cfg);
  ClassMap labels(static_cast<std::size_t>(cfg.height), static_cast<std::size_t>(cfg.width));
  for (std::size_t px = 0; px < grid.size(); ++px) {
    if (grid[px].index >= 0) labels.ids[px] = cloud.labels[static_cast<std::size_t>(grid[px].index)];
  }
  f.labels = std::move(labels);
  return f;
}

LabeledCloud backproject(const SphericalFrame& frame, const ClassMap& class_map, const PointCloud& cloud) {
  if (class_map.height != frame.height() || class_map.width != frame.width()) {
    throw ShapeError("backproject: class map is " + std::to_string(class_map.height) + "x" +
                     std::to_string(class_map.width) + " but frame is " + std::to_string(frame.height()) + "x" +
                     std::to_string(frame.width()));
  }
  LabeledCloud out{cloud.points, std::vector<std::uint8_t>(cloud.size(), 0)};
  for (std::size_t px = 0; px < frame.source_index.size(); ++px) {
    const std::int32_t src = frame.source_index[px];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= cloud.size()) {
      throw ShapeError("backproject: frame references point " + std::to_string(src) + " beyond cloud size " +
                       std::to_string(cloud.size()));
    }
    out.labels[static_cast<std::size_t>(src)] = class_map.ids[px];
  }
  return out;
}

SphericalFrame frame_from_dataset(const Tensor& record) {
  if (record.rank() != 3 || record.channels() != 6) {
    throw DataError("dataset record must be H x W x 6 (x, y, z, intensity, range, label), got " +
                    shape_to_string(record.shape()));
  }
  const std::size_t h = record.height(), w = record.width();
  SphericalFrame f;
  f.channels = Tensor::feature_map(h, w, kFrameChannels);
  f.occupancy.assign(h * w, 0);
  f.source_index.assign(h * w, -1);
  ClassMap labels(h, w);
  std::int32_t next = 0;
  for (std::size_t px = 0; px < h * w; ++px) {
    const float* rec = &record[px * 6];
    std::copy(rec, rec + kFrameChannels, &f.channels[px * kFrameChannels]);
    const float raw = rec[5];
    if (!std::isfinite(raw)) throw DataError("dataset record: non-finite label at pixel " + std::to_string(px));
    const long id = std::lround(raw);
    if (id < 0 || id >= kNumClasses) {
      throw DataError("dataset record: label " + std::to_string(id) + " out of range at pixel " + std::to_string(px));
    }
    labels.ids[px] = static_cast<std::uint8_t>(id);
    if (rec[kRange] > 0.0f) {
      f.occupancy[px] = 1;
      f.source_index[px] = next++;
    }
  }
  f.labels = std::move(labels);
  return f;
}

PointCloud cloud_from_frame(const SphericalFrame& frame) {
  PointCloud cloud;
  for (std::size_t px = 0; px < frame.occupancy.size(); ++px) {
    if (!frame.occupancy[px]) continue;
    const float* ch = &frame.channels[px * kFrameChannels];
    cloud.points.push_back(Point{ch[kX], ch[kY], ch[kZ], ch[kIntensity]});
  }
  return cloud;
}

Tensor frame_to_record(const SphericalFrame& frame) {
  const std::size_t h = frame.height(), w = frame.width();
  Tensor rec = Tensor::feature_map(h, w, 6);
  for (std::size_t px = 0; px < h * w; ++px) {
    std::copy_n(&frame.channels[px * kFrameChannels], kFrameChannels, &rec[px * 6]);
    rec[px * 6 + 5] = frame.labels ? static_cast<float>(frame.labels->ids[px]) : 0.0f;
  }
  return rec;
}

}  // namespace pointseg::proj
