#include <cmath>
#include <random>

#include "pointseg/error.hpp"
#include "pointseg/postprocess.hpp"

namespace pointseg::post {

namespace {

bool plane_through(const Point& a, const Point& b, const Point& c, PlaneModel& out) {
  const double ux = b.x - a.x, uy = b.y - a.y, uz = b.z - a.z;
  const double vx = c.x - a.x, vy = c.y - a.y, vz = c.z - a.z;
  double nx = uy * vz - uz * vy, ny = uz * vx - ux * vz, nz = ux * vy - uy * vx;
  const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
  const double scale = std::sqrt(ux * ux + uy * uy + uz * uz) * std::sqrt(vx * vx + vy * vy + vz * vz);
  if (!(norm > 1e-9 * scale) || norm == 0.0) return false;
  if (nz < 0 || (nz == 0 && (ny < 0 || (ny == 0 && nx < 0)))) {
    nx = -nx;
    ny = -ny;
    nz = -nz;
  }
  out.nx = nx / norm;
  out.ny = ny / norm;
  out.nz = nz / norm;
  out.d = -(out.nx * a.x + out.ny * a.y + out.nz * a.z);
  return true;
}

std::size_t count_inliers(std::span<const Point> points, const PlaneModel& plane, double threshold) {
  std::size_t n = 0;
  for (const Point& p : points) n += std::abs(plane.distance(p)) <= threshold;
  return n;
}

}  // namespace

void RansacConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("ransac: iterations must be >= 1");
  if (!(threshold > 0)) throw std::invalid_argument("ransac: threshold must be > 0");
  if (!(min_fraction >= 0 && min_fraction <= 1)) throw std::invalid_argument("ransac: min_fraction must be in [0, 1]");
}

PlaneFit ransac_plane(std::span<const Point> points, const RansacConfig& cfg) {
  cfg.validate();
  if (points.size() < 3) throw DataError("degenerate input");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);

  PlaneModel best;
  std::size_t best_count = 0;
  bool found = false;
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    std::size_t k = pick(rng);
    if (i == j || j == k || i == k) continue;
    PlaneModel h;
    if (!plane_through(points[i], points[j], points[k], h)) continue;
    const std::size_t count = count_inliers(points, h, cfg.threshold);
    if (!found || count > best_count) {
      best = h;
      best_count = count;
      found = true;
    }
  }
  if (!found) throw DataError("degenerate input");

  PlaneFit fit{best, {}};
  fit.inliers.reserve(best_count);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::abs(best.distance(points[i])) <= cfg.threshold) fit.inliers.push_back(i);
  }
  return fit;
}

RefineResult refine(const LabeledCloud& cloud, const RansacConfig& cfg) {
  if (cloud.points.empty()) throw DataError("refine: empty cloud");
  if (cloud.labels.size() != cloud.points.size()) throw ShapeError("refine: label count does not match point count");
  RefineResult out{cloud, false, {}};
  PlaneFit fit;
  try {
    fit = ransac_plane(cloud.points, cfg);
  } catch (const DataError& e) {
    out.warning = true;
    out.message = std::string("ransac failed: ") + e.what();
    return out;
  }
  const double fraction = static_cast<double>(fit.inliers.size()) / static_cast<double>(cloud.points.size());
  if (fraction < cfg.min_fraction) {
    out.warning = true;
    out.message = "ransac: best plane covers " + std::to_string(fraction) + " of the cloud, below min_fraction";
    return out;
  }
  for (std::size_t i : fit.inliers) out.cloud.labels[i] = 0;
  return out;
}

}  // namespace pointseg::post
