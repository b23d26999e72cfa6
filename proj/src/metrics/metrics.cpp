#include "pointseg/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pointseg/error.hpp"

namespace pointseg::metrics {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
  return buf;
}

std::string plain(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

ClassCounts accumulate(const ClassMap& pred, const ClassMap& gt, ClassCounts counts,
                       std::span<const std::uint8_t> occupancy) {
  if (pred.height != gt.height || pred.width != gt.width || pred.ids.size() != gt.ids.size()) {
    throw ShapeError("accumulate: prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     ", ground truth is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  if (!occupancy.empty() && occupancy.size() != pred.ids.size()) {
    throw ShapeError("accumulate: occupancy mask size does not match the maps");
  }
  for (std::size_t i = 0; i < pred.ids.size(); ++i) {
    if (!occupancy.empty() && !occupancy[i]) continue;
    const auto p = pred.ids[i], g = gt.ids[i];
    if (p >= kNumClasses || g >= kNumClasses) throw DataError("accumulate: class id out of range");
    ++counts.classes[p].pred;
    ++counts.classes[g].gt;
    if (p == g) ++counts.classes[p].tp;
    ++counts.pixels;
  }
  ++counts.frames;
  return counts;
}

ClassCounts merge(const ClassCounts& a, const ClassCounts& b) {
  ClassCounts out = a;
  for (int k = 0; k < kNumClasses; ++k) {
    out.classes[k].tp += b.classes[k].tp;
    out.classes[k].pred += b.classes[k].pred;
    out.classes[k].gt += b.classes[k].gt;
  }
  out.frames += b.frames;
  out.pixels += b.pixels;
  return out;
}

EvalReport finalize(const ClassCounts& counts) {
  EvalReport r;
  r.frames = counts.frames;
  for (int k = 0; k < kNumClasses; ++k) {
    const SetCounts& c = counts.classes[k];
    r.classes[k] = {ratio(c.tp, c.pred), ratio(c.tp, c.gt), ratio(c.tp, c.union_size())};
  }
  return r;
}

std::optional<double> EvalReport::mean_iou(bool foreground_only) const {
  double sum = 0;
  int n = 0;
  for (int k = foreground_only ? 1 : 0; k < kNumClasses; ++k) {
    if (classes[k].iou) {
      sum += *classes[k].iou;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::string format_table(const EvalReport& report) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s\n", "class", "precision", "recall", "iou");
  os << line;
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& c = report.classes[k];
    std::snprintf(line, sizeof line, "%-12s %10s %10s %10s\n", std::string(class_name(k)).c_str(),
                  percent(c.precision).c_str(), percent(c.recall).c_str(), percent(c.iou).c_str());
    os << line;
  }
  os << "frames: " << report.frames << "\n";
  for (const auto& t : report.timings) {
    std::snprintf(line, sizeof line, "%-16s %10.3f ms\n", t.stage.c_str(), t.mean_ms);
    os << line;
  }
  return os.str();
}

std::string format_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "class,precision,recall,iou\n";
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& c = report.classes[k];
    os << class_name(k) << ',' << plain(c.precision) << ',' << plain(c.recall) << ',' << plain(c.iou) << '\n';
  }
  return os.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& table, const std::filesystem::path& csv) {
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p);
    if (!os) throw DataError("cannot open " + p.string() + " for writing");
    os << text;
    if (!os) throw DataError("failed writing " + p.string());
  };
  write(table, format_table(report));
  write(csv, format_csv(report));
}

}  // namespace pointseg::metrics
