#pragma once

#include <cstdint>

#include "pointseg/projection.hpp"
#include "pointseg/types.hpp"

namespace pointseg::proj {

struct SceneConfig {
  int cars = 3;
  int pedestrians = 2;
  int cyclists = 2;
  double sensor_height = 1.73;  // meters above the ground plane
  double max_range = 70.0;
  double range_noise = 0.01;    // meters, along the ray
};

/// Ray-casts a flat ground plane and box-shaped road objects through every
/// pixel center of `cfg`, returning one labeled point per hit. Deterministic
/// given the seed. Points sit on pixel centers, so projecting the result
/// reproduces the ray grid exactly.
LabeledCloud synthesize_scene(std::uint64_t seed, const ProjectionConfig& cfg = {}, const SceneConfig& scene = {});

}  // namespace pointseg::proj
