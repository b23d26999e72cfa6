#include "pointseg/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace pointseg::proj {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Box {
  double cx, cy;         // footprint center
  double length, width;  // along the yawed x / y axes
  double z_min, z_max;
  double yaw;
  std::uint8_t label;
  float intensity;
};

struct Footprint {
  double length, width, height;
  float intensity;
};

// Typical extents (l, w, h) and a class-specific reflectance.
constexpr std::array<Footprint, 4> kShapes = {{
    {0, 0, 0, 0.15f},
    {3.9, 1.6, 1.5, 0.65f},
    {0.6, 0.6, 1.75, 0.40f},
    {1.7, 0.6, 1.7, 0.85f},
}};

// Slab test in the box frame; returns the entry distance or a negative value.
double intersect(const Box& b, const std::array<double, 3>& dir) {
  const double c = std::cos(-b.yaw), s = std::sin(-b.yaw);
  const double ox = c * (0.0 - b.cx) - s * (0.0 - b.cy);
  const double oy = s * (0.0 - b.cx) + c * (0.0 - b.cy);
  const double dx = c * dir[0] - s * dir[1];
  const double dy = s * dir[0] + c * dir[1];
  const std::array<double, 3> o{ox, oy, 0.0};
  const std::array<double, 3> d{dx, dy, dir[2]};
  const std::array<double, 3> lo{-b.length / 2, -b.width / 2, b.z_min};
  const std::array<double, 3> hi{b.length / 2, b.width / 2, b.z_max};
  double t0 = 0.0, t1 = 1e9;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < lo[a] || o[a] > hi[a]) return -1.0;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0 > 0.0 ? t0 : -1.0;
}

}  // namespace

LabeledCloud synthesize_scene(std::uint64_t seed, const ProjectionConfig& cfg, const SceneConfig& scene) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double ground = -scene.sensor_height;
  const double half_fov = std::min(std::abs(cfg.zenith_min), std::abs(cfg.zenith_max)) * kDegToRad;
  std::vector<Box> boxes;
  auto place = [&](std::uint8_t label, int count) {
    const Footprint& f = kShapes[label];
    for (int placed = 0, tries = 0; placed < count && tries < 200; ++tries) {
      const double dist = 6.0 + unit(rng) * 24.0;
      const double bearing = (unit(rng) * 2.0 - 1.0) * half_fov * 0.85;
      Box b{dist * std::cos(bearing), dist * std::sin(bearing), f.length, f.width, ground,
            ground + f.height, unit(rng) * std::numbers::pi, label, f.intensity};
      const double radius = 0.5 * std::hypot(f.length, f.width);
      const bool overlaps = std::any_of(boxes.begin(), boxes.end(), [&](const Box& o) {
        return std::hypot(o.cx - b.cx, o.cy - b.cy) < radius + 0.5 * std::hypot(o.length, o.width) + 0.5;
      });
      if (overlaps) continue;
      boxes.push_back(b);
      ++placed;
    }
  };
  place(1, scene.cars);
  place(2, scene.pedestrians);
  place(3, scene.cyclists);

  LabeledCloud cloud;
  for (int r = 0; r < cfg.height; ++r) {
    const double alpha = (cfg.azimuth_max - (r + 0.5) * cfg.row_resolution()) * kDegToRad;
    for (int c = 0; c < cfg.width; ++c) {
      const double beta = (cfg.zenith_min + (c + 0.5) * cfg.col_resolution()) * kDegToRad;
      const std::array<double, 3> dir{std::cos(alpha) * std::cos(beta), std::cos(alpha) * std::sin(beta),
                                      std::sin(alpha)};
      double best = std::numeric_limits<double>::infinity();
      std::uint8_t label = 0;
      float intensity = kShapes[0].intensity;
      if (dir[2] < 0.0) best = ground / dir[2];
      for (const Box& b : boxes) {
        const double t = intersect(b, dir);
        if (t > 0.0 && t < best) {
          best = t;
          label = b.label;
          intensity = b.intensity;
        }
      }
      if (!(best <= scene.max_range)) continue;
      const double t = best + scene.range_noise * noise(rng);
      const float refl = std::clamp(intensity + 0.05f * static_cast<float>(noise(rng)), 0.0f, 1.0f);
      cloud.points.push_back(Point{static_cast<float>(t * dir[0]), static_cast<float>(t * dir[1]),
                                   static_cast<float>(t * dir[2]), refl});
      cloud.labels.push_back(label);
    }
  }
  return cloud;
}

}  // namespace pointseg::proj
