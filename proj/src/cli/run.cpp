#include <CLI11.hpp>

#include <ostream>

#include "pointseg/cli.hpp"
#include "pointseg/error.hpp"

namespace pointseg::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"LiDAR point-cloud segmentation: projection, inference, training, evaluation, benchmarking"};
  app.name("pointseg");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "key=value file; command-line flags take precedence");

  app.add_option("--input", cfg.input, "scan (.bin), frame (.npy) or dataset directory");
  app.add_option("--output", cfg.output, "output path or directory");
  app.add_option("--checkpoint", cfg.checkpoint, "model checkpoint");
  app.add_option("--steps", cfg.steps, "training steps");
  app.add_option("--lr", cfg.lr, "Adagrad learning rate");
  app.add_option("--batch", cfg.batch, "frames per training step");
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_flag("--ransac", cfg.ransac, "refine labels with RANSAC ground removal (infer)");
  app.add_option("--ransac-iterations", cfg.ransac_cfg.iterations, "RANSAC hypotheses");
  app.add_option("--ransac-threshold", cfg.ransac_cfg.threshold, "RANSAC inlier distance in meters");
  app.add_option("--ransac-min-fraction", cfg.ransac_cfg.min_fraction, "minimum inlier fraction to accept a plane");
  app.add_option("--threads", cfg.threads, "kernel threads; 0 reads POINTSEG_THREADS, else 1");
  app.add_option("--iterations", cfg.iterations, "timed bench iterations");
  app.add_option("--warmup", cfg.warmup, "untimed bench iterations");
  app.add_option("--base-channels", cfg.base_channels, "conv1 width of a freshly initialized model");
  app.add_option("--synthetic-frames", cfg.synthetic_frames, "synthetic scenes used by train without --input");
  app.add_option("--log-every", cfg.log_every, "loss logging interval in steps")->check(CLI::PositiveNumber);
  app.add_option("--class-weights", cfg.class_weights, "loss weight per class")->expected(4);

  auto* project = app.add_subcommand("project", "project a scan to a frame array and range preview");
  auto* train = app.add_subcommand("train", "train on a dataset directory or synthetic scenes");
  auto* infer = app.add_subcommand("infer", "segment one scan or frame");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  auto* bench = app.add_subcommand("bench", "per-stage latency percentiles");
  for (auto* sub : {project, train, infer, eval, bench}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (project->parsed()) return cmd_project(cfg, out);
    if (train->parsed()) return cmd_train(cfg, out);
    if (infer->parsed()) return cmd_infer(cfg, out, err);
    if (eval->parsed()) return cmd_eval(cfg, out);
    return cmd_bench(cfg, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace pointseg::cli
