#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pointseg/types.hpp"

namespace pointseg::metrics {

/// Pixel counts for one class.
struct SetCounts {
  std::uint64_t tp = 0;    // |pred ∩ gt|
  std::uint64_t pred = 0;  // |pred|
  std::uint64_t gt = 0;    // |gt|

  std::uint64_t union_size() const { return pred + gt - tp; }
  friend bool operator==(const SetCounts&, const SetCounts&) = default;
};

struct ClassCounts {
  std::array<SetCounts, kNumClasses> classes{};
  std::uint64_t frames = 0;
  std::uint64_t pixels = 0;

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// Adds one frame. Only pixels with a nonzero occupancy entry count; an empty
/// occupancy span counts every pixel.
ClassCounts accumulate(const ClassMap& pred, const ClassMap& gt, ClassCounts counts,
                       std::span<const std::uint8_t> occupancy = {});

ClassCounts merge(const ClassCounts& a, const ClassCounts& b);

/// A fraction is empty when its denominator is zero.
struct ClassScores {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> iou;

  bool undefined() const { return !iou.has_value(); }
};

struct StageTiming {
  std::string stage;
  double mean_ms = 0;
};

struct EvalReport {
  std::array<ClassScores, kNumClasses> classes{};
  std::uint64_t frames = 0;
  std::vector<StageTiming> timings;

  /// Mean IoU over defined classes, optionally skipping background.
  std::optional<double> mean_iou(bool foreground_only = true) const;
};

EvalReport finalize(const ClassCounts& counts);

/// Columns: class, precision, recall, IoU (percent), "undefined" for 0/0.
std::string format_table(const EvalReport& report);
/// "class,precision,recall,iou" rows; undefined values are left empty.
std::string format_csv(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& table, const std::filesystem::path& csv);

/// Published full-scale results, kept for comparison only.
namespace reference {
inline constexpr double kCarIoU = 67.4;
inline constexpr double kPedestrianIoU = 19.2;
inline constexpr double kCyclistIoU = 32.7;
inline constexpr double kGpuLatencyMs = 12.0;
}  // namespace reference

}  // namespace pointseg::metrics
