#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "pointseg/cli.hpp"
#include "pointseg/dataio.hpp"
#include "pointseg/error.hpp"
#include "pointseg/metrics.hpp"
#include "pointseg/network/model.hpp"
#include "pointseg/network/train.hpp"
#include "pointseg/ops.hpp"
#include "pointseg/scene.hpp"

namespace pointseg::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void apply_threads(const RunConfig& cfg) {
  int threads = cfg.threads;
  if (threads <= 0) {
    if (const char* env = std::getenv("POINTSEG_THREADS")) threads = std::atoi(env);
  }
  ops::set_num_threads(threads > 0 ? threads : 1);
}

struct LoadedFrame {
  proj::SphericalFrame frame;
  PointCloud cloud;
};

LoadedFrame load_input(const std::string& input, const proj::ProjectionConfig& pc) {
  const fs::path path(input);
  const auto ext = path.extension();
  if (ext == ".bin") {
    PointCloud cloud = io::load_velodyne_bin(path);
    auto frame = proj::project(cloud, pc);
    return {std::move(frame), std::move(cloud)};
  }
  if (ext == ".npy") {
    const Shape expected{static_cast<std::size_t>(pc.height), static_cast<std::size_t>(pc.width), 6};
    auto frame = proj::frame_from_dataset(io::load_frame_array(path, expected));
    PointCloud cloud = proj::cloud_from_frame(frame);
    return {std::move(frame), std::move(cloud)};
  }
  throw DataError(input + ": expected a .bin scan or a .npy frame");
}

net::ModelParams model_for(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return net::load_checkpoint(cfg.checkpoint);
  auto graph = net::GraphConfig::reduced(cfg.base_channels, cfg.projection.height, cfg.projection.width, {6, 9, 12});
  return net::init_params(graph, cfg.seed);
}

net::Example example_from(const proj::SphericalFrame& frame) {
  if (!frame.labels) throw DataError("training frame has no labels");
  return {frame.channels, *frame.labels};
}

std::vector<net::Example> synthetic_examples(const RunConfig& cfg) {
  std::vector<net::Example> out;
  for (int i = 0; i < cfg.synthetic_frames; ++i) {
    auto cloud = proj::synthesize_scene(cfg.seed + static_cast<std::uint64_t>(i), cfg.projection);
    out.push_back(example_from(proj::project_labeled(cloud, cfg.projection)));
  }
  return out;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

int cmd_project(const RunConfig& cfg, std::ostream& out) {
  if (cfg.input.empty() || cfg.output.empty()) throw UsageError("project needs --input and --output");
  auto loaded = load_input(cfg.input, cfg.projection);
  const fs::path target(cfg.output);
  io::save_frame_array(proj::frame_to_record(loaded.frame), target);
  fs::path preview = target;
  preview.replace_extension(".ppm");
  io::save_range_image(loaded.frame.channels, proj::kRange, preview);
  std::size_t occupied = std::count(loaded.frame.occupancy.begin(), loaded.frame.occupancy.end(), 1);
  out << "projected " << loaded.cloud.size() << " points into " << occupied << " pixels -> " << target.string()
      << ", " << preview.string() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  if (cfg.output.empty()) throw UsageError("train needs --output for the checkpoint");
  if (cfg.steps < 1 || cfg.batch < 1) throw UsageError("--steps and --batch must be >= 1");
  if (cfg.class_weights.size() != kNumClasses) throw UsageError("--class-weights needs 4 values");
  apply_threads(cfg);

  std::vector<fs::path> files;
  std::vector<net::Example> resident;
  if (cfg.input.empty()) {
    resident = synthetic_examples(cfg);
    out << "training on " << resident.size() << " synthetic frames\n";
  } else {
    files = io::DatasetIndex::scan(cfg.input, cfg.seed).subset(io::Split::Train);
    if (files.empty()) throw DataError(cfg.input + ": no training frames (*.npy) found");
    out << "training on " << files.size() << " frames from " << cfg.input << "\n";
  }

  net::ModelParams params = model_for(cfg);
  auto state = net::AdagradState::zeros_like(params);
  net::TrainConfig tc{cfg.lr, cfg.class_weights};

  fs::path csv_path(cfg.output);
  csv_path += ".loss.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot open " + csv_path.string() + " for writing");
  csv << "step,loss\n";

  const std::size_t count = files.empty() ? resident.size() : files.size();
  int step = 0;
  for (std::uint64_t epoch = 0; step < cfg.steps; ++epoch) {
    for (const auto& group : io::batch_indices(count, static_cast<std::size_t>(cfg.batch), cfg.seed, epoch)) {
      if (step >= cfg.steps) break;
      std::vector<net::Example> batch;
      for (std::size_t i : group) {
        batch.push_back(files.empty() ? resident[i] : example_from(load_input(files[i].string(), cfg.projection).frame));
      }
      const double loss = net::train_step(params, batch, state, tc);
      ++step;
      if (step % cfg.log_every == 0 || step == 1 || step == cfg.steps) {
        csv << step << ',' << loss << '\n';
        out << "step " << step << " loss " << loss << "\n";
      }
    }
  }
  net::save_checkpoint(params, cfg.output);
  out << "saved " << cfg.output << "\n";
  return kOk;
}

int cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.input.empty() || cfg.output.empty() || cfg.checkpoint.empty()) {
    throw UsageError("infer needs --input, --checkpoint and --output");
  }
  apply_threads(cfg);
  auto loaded = load_input(cfg.input, cfg.projection);
  const auto params = net::load_checkpoint(cfg.checkpoint);
  ClassMap map = net::mask_unoccupied(net::predict(loaded.frame, params), loaded.frame);
  LabeledCloud labeled = proj::backproject(loaded.frame, map, loaded.cloud);
  if (cfg.ransac && !labeled.points.empty()) {
    auto refined = post::refine(labeled, cfg.ransac_cfg);
    if (refined.warning) err << "warning: " << refined.message << "\n";
    labeled = std::move(refined.cloud);
  }
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  io::save_class_map_image(map, dir / "class_map.ppm");
  io::save_labeled_cloud(labeled, dir / "labeled_cloud.txt");
  std::array<std::size_t, kNumClasses> per_class{};
  for (auto l : labeled.labels) ++per_class[l];
  out << "points:";
  for (int k = 0; k < kNumClasses; ++k) out << ' ' << class_name(k) << '=' << per_class[k];
  out << "\nwrote " << (dir / "class_map.ppm").string() << ", " << (dir / "labeled_cloud.txt").string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.input.empty() || cfg.checkpoint.empty()) throw UsageError("eval needs --input and --checkpoint");
  apply_threads(cfg);
  const auto index = io::DatasetIndex::scan(cfg.input, cfg.seed);
  auto files = index.subset(io::Split::Val);
  if (files.empty()) files = index.frames;
  if (files.empty()) throw DataError(cfg.input + ": no frames (*.npy) found");
  const auto params = net::load_checkpoint(cfg.checkpoint);

  metrics::ClassCounts counts;
  double forward_ms = 0, argmax_ms = 0;
  for (const auto& f : files) {
    auto frame = load_input(f.string(), cfg.projection).frame;
    if (!frame.labels) throw DataError(f.string() + ": frame has no labels");
    auto t0 = Clock::now();
    Tensor probs = net::model_forward(frame, params);
    forward_ms += elapsed_ms(t0);
    t0 = Clock::now();
    ClassMap pred = net::predict(probs);
    argmax_ms += elapsed_ms(t0);
    counts = metrics::accumulate(pred, *frame.labels, counts, frame.occupancy);
  }
  auto report = metrics::finalize(counts);
  const double n = static_cast<double>(files.size());
  report.timings = {{"forward", forward_ms / n}, {"argmax", argmax_ms / n}};
  out << metrics::format_table(report);
  if (!cfg.output.empty()) {
    const fs::path dir(cfg.output);
    fs::create_directories(dir);
    metrics::write_report(report, dir / "report.txt", dir / "report.csv");
    out << "wrote " << (dir / "report.txt").string() << ", " << (dir / "report.csv").string() << "\n";
  }
  return kOk;
}

std::vector<StageStats> run_bench(const RunConfig& cfg) {
  if (cfg.iterations < 1 || cfg.warmup < 0) throw UsageError("--iterations must be >= 1 and --warmup >= 0");
  apply_threads(cfg);
  PointCloud cloud;
  if (cfg.input.empty()) {
    for (const Point& p : proj::synthesize_scene(cfg.seed, cfg.projection).points) cloud.points.push_back(p);
  } else {
    cloud = load_input(cfg.input, cfg.projection).cloud;
  }
  const auto params = model_for(cfg);

  std::vector<StageStats> stats{{"projection"}, {"forward"}, {"argmax"}, {"backprojection"}, {"ransac"}};
  for (int it = 0; it < cfg.warmup + cfg.iterations; ++it) {
    const bool timed = it >= cfg.warmup;
    auto t0 = Clock::now();
    auto frame = proj::project(cloud, cfg.projection);
    const double t_proj = elapsed_ms(t0);
    t0 = Clock::now();
    Tensor probs = net::model_forward(frame, params);
    const double t_fwd = elapsed_ms(t0);
    t0 = Clock::now();
    ClassMap map = net::mask_unoccupied(net::predict(probs), frame);
    const double t_arg = elapsed_ms(t0);
    t0 = Clock::now();
    LabeledCloud labeled = proj::backproject(frame, map, cloud);
    const double t_back = elapsed_ms(t0);
    t0 = Clock::now();
    auto refined = post::refine(labeled, cfg.ransac_cfg);
    const double t_ransac = elapsed_ms(t0);
    if (timed) {
      const double t[] = {t_proj, t_fwd, t_arg, t_back, t_ransac};
      for (std::size_t s = 0; s < stats.size(); ++s) stats[s].samples_ms.push_back(t[s]);
    }
  }
  for (auto& s : stats) {
    s.median_ms = percentile(s.samples_ms, 0.5);
    s.p95_ms = percentile(s.samples_ms, 0.95);
  }
  return stats;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  const auto stats = run_bench(cfg);
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %6s %12s %12s\n", "stage", "count", "median_ms", "p95_ms");
  out << line;
  for (const auto& s : stats) {
    std::snprintf(line, sizeof line, "%-16s %6zu %12.3f %12.3f\n", s.stage.c_str(), s.samples_ms.size(), s.median_ms,
                  s.p95_ms);
    out << line;
  }
  if (!cfg.output.empty()) {
    std::ofstream csv(cfg.output);
    if (!csv) throw DataError("cannot open " + cfg.output + " for writing");
    csv << "stage,count,median_ms,p95_ms\n";
    for (const auto& s : stats) csv << s.stage << ',' << s.samples_ms.size() << ',' << s.median_ms << ',' << s.p95_ms << '\n';
  }
  return kOk;
}

}  // namespace pointseg::cli
