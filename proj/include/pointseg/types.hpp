#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pointseg {

enum class ObjectClass : std::uint8_t { Background = 0, Car = 1, Pedestrian = 2, Cyclist = 3 };

inline constexpr int kNumClasses = 4;

constexpr std::string_view class_name(int id) {
  switch (id) {
    case 0: return "background";
    case 1: return "car";
    case 2: return "pedestrian";
    case 3: return "cyclist";
    default: return "unknown";
  }
}

struct Point {
  float x = 0, y = 0, z = 0;
  float intensity = 0;  // reflectance in [0, 1]

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

/// Point cloud with one class id per point.
struct LabeledCloud {
  std::vector<Point> points;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return points.size(); }
  friend bool operator==(const LabeledCloud&, const LabeledCloud&) = default;
};

/// Dense rows x cols grid of class ids.
struct ClassMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> ids;

  ClassMap() = default;
  ClassMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), ids(h * w, fill) {}

  std::uint8_t at(std::size_t r, std::size_t c) const { return ids[r * width + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return ids[r * width + c]; }

  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

}  // namespace pointseg
