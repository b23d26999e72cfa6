#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pointseg/postprocess.hpp"
#include "pointseg/projection.hpp"

namespace pointseg::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalError = 3 };

struct RunConfig {
  std::string input;
  std::string output;
  std::string checkpoint;
  int steps = 100;
  float lr = 0.001f;
  int batch = 32;
  std::uint64_t seed = 0;
  bool ransac = false;
  post::RansacConfig ransac_cfg;
  int threads = 0;  // 0: POINTSEG_THREADS, else 1
  int iterations = 20;
  int warmup = 10;
  int base_channels = 64;
  int synthetic_frames = 8;
  int log_every = 1;
  std::vector<float> class_weights{1.0f, 1.0f, 1.0f, 1.0f};
  proj::ProjectionConfig projection;
};

/// Thrown for invalid flag combinations detected after parsing.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// .bin scan or .npy frame record -> frame array + range preview.
int cmd_project(const RunConfig& cfg, std::ostream& out);
/// Adagrad training; writes the checkpoint and a step,loss CSV.
int cmd_train(const RunConfig& cfg, std::ostream& out);
/// Class map image and labeled cloud for one frame.
int cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err);
/// Precision / recall / IoU over the validation split.
int cmd_eval(const RunConfig& cfg, std::ostream& out);

struct StageStats {
  std::string stage;
  std::vector<double> samples_ms;
  double median_ms = 0;
  double p95_ms = 0;
};

/// projection, forward, argmax, backprojection, ransac
std::vector<StageStats> run_bench(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg, std::ostream& out);

/// Parses arguments and dispatches; maps errors to ExitCode, messages to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pointseg::cli
