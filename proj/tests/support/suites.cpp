#include "suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pointseg/cli.hpp"
#include "pointseg/dataio.hpp"
#include "pointseg/error.hpp"
#include "pointseg/metrics.hpp"
#include "pointseg/network/model.hpp"
#include "pointseg/network/train.hpp"
#include "pointseg/postprocess.hpp"
#include "pointseg/scene.hpp"

namespace suites {

using namespace pointseg;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Tally {
  bool pass = true;
  std::ostringstream out;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      out << "FAILED: " << what << "\n";
    }
  }
  Outcome done(const std::string& summary) {
    return {pass, summary + (out.str().empty() ? "" : "\n" + out.str())};
  }
};

fs::path scratch_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("pointseg_" + tag + "_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

// ---------------------------------------------------------------------------

Outcome kernel_oracles(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tally t;
  constexpr int kCases = 60;
  constexpr double kTol = 1e-5;
  double worst[5] = {0, 0, 0, 0, 0};

  for (int i = 0; i < kCases; ++i) {
    ops::ConvSpec s;
    s.kernel_h = uniform(rng, 1, 3);
    s.kernel_w = uniform(rng, 1, 4);
    s.stride_h = uniform(rng, 1, 2);
    s.stride_w = uniform(rng, 1, 2);
    s.dilation_h = uniform(rng, 1, 2);
    s.dilation_w = uniform(rng, 1, 3);
    s.padding = uniform(rng, 0, 3) == 0 ? ops::Padding::Valid : ops::Padding::Same;
    s.in_channels = uniform(rng, 1, 5);
    s.out_channels = uniform(rng, 1, 5);
    if (i % 6 == 0) {
      // The enlargement rates and the encoder stride.
      const int rate = std::array{6, 9, 12}[(i / 6) % 3];
      s = ops::ConvSpec::square(3, uniform(rng, 1, 4), uniform(rng, 1, 4)).dilation(rate, rate);
    } else if (i % 6 == 1) {
      s = ops::ConvSpec::square(3, uniform(rng, 1, 4), uniform(rng, 1, 4)).stride(1, 2);
    }
    int h = uniform(rng, 1, 9), w = uniform(rng, 1, 14);
    if (s.dilation_h >= 6) h = uniform(rng, 6, 16), w = uniform(rng, 6, 16);
    if (s.padding == ops::Padding::Valid) {
      h = std::max(h, (s.kernel_h - 1) * s.dilation_h + 1);
      w = std::max(w, (s.kernel_w - 1) * s.dilation_w + 1);
    }
    auto x = oracle::random_tensor({std::size_t(h), std::size_t(w), std::size_t(s.in_channels)}, rng);
    auto wt = oracle::random_tensor(s.weight_shape(), rng);
    auto b = oracle::random_tensor({std::size_t(s.out_channels)}, rng);
    const double d = oracle::max_abs_diff(ops::conv2d(x, wt, b, s), oracle::conv2d(x, wt, b, s));
    worst[0] = std::max(worst[0], d);
    t.expect(d <= kTol, "conv2d case " + std::to_string(i) + " diff " + fmt("%.3g", d));
  }

  for (int i = 0; i < kCases; ++i) {
    ops::ConvSpec s;
    s.kernel_h = uniform(rng, 1, 3);
    s.kernel_w = uniform(rng, 1, 4);
    s.stride_w = uniform(rng, 1, 2);
    s.padding = uniform(rng, 0, 3) == 0 ? ops::Padding::Valid : ops::Padding::Same;
    s.in_channels = uniform(rng, 1, 5);
    s.out_channels = uniform(rng, 1, 5);
    auto x = oracle::random_tensor({std::size_t(uniform(rng, 1, 6)), std::size_t(uniform(rng, 1, 9)),
                                    std::size_t(s.in_channels)}, rng);
    auto wt = oracle::random_tensor(ops::deconv_weight_shape(s), rng);
    auto b = oracle::random_tensor({std::size_t(s.out_channels)}, rng);
    const double d = oracle::max_abs_diff(ops::deconv2d(x, wt, b, s), oracle::deconv2d(x, wt, b, s));
    worst[1] = std::max(worst[1], d);
    t.expect(d <= kTol, "deconv2d case " + std::to_string(i) + " diff " + fmt("%.3g", d));
  }

  for (int i = 0; i < kCases; ++i) {
    const int kh = uniform(rng, 1, 3), kw = uniform(rng, 1, 3), sh = uniform(rng, 1, 2), sw = uniform(rng, 1, 2);
    auto x = oracle::random_tensor({std::size_t(uniform(rng, 1, 8)), std::size_t(uniform(rng, 1, 12)),
                                    std::size_t(uniform(rng, 1, 4))}, rng);
    const double d = oracle::max_abs_diff(ops::maxpool2d(x, {kh, kw}, {sh, sw}).output, oracle::maxpool2d(x, kh, kw, sh, sw));
    worst[2] = std::max(worst[2], d);
    t.expect(d <= kTol, "maxpool2d case " + std::to_string(i));
  }

  for (int i = 0; i < kCases; ++i) {
    auto x = oracle::random_tensor({std::size_t(uniform(rng, 1, 20)), std::size_t(uniform(rng, 1, 40)),
                                    std::size_t(uniform(rng, 1, 16))}, rng);
    const double d = oracle::max_abs_diff(ops::global_avg_pool(x), oracle::global_avg_pool(x));
    worst[3] = std::max(worst[3], d);
    t.expect(d <= kTol, "global_avg_pool case " + std::to_string(i));
  }

  for (int i = 0; i < kCases; ++i) {
    const std::size_t c = uniform(rng, 1, 64), k = uniform(rng, 1, 64);
    auto x = oracle::random_tensor({1, 1, c}, rng);
    auto wt = oracle::random_tensor({c, k}, rng);
    auto b = oracle::random_tensor({k}, rng);
    const double d = oracle::max_abs_diff(ops::dense(x, wt, b), oracle::dense(x, wt, b));
    worst[4] = std::max(worst[4], d);
    t.expect(d <= kTol, "dense case " + std::to_string(i));
  }

  return t.done(std::to_string(kCases) + " cases per kernel; max |diff| conv " + fmt("%.2g", worst[0]) + ", deconv " +
                fmt("%.2g", worst[1]) + ", maxpool " + fmt("%.2g", worst[2]) + ", gap " + fmt("%.2g", worst[3]) +
                ", dense " + fmt("%.2g", worst[4]));
}

// ---------------------------------------------------------------------------

Outcome gradients(std::uint64_t seed) {
  using gradcheck::Leaves;
  std::mt19937_64 rng(seed);
  Tally t;
  int checks = 0;
  double worst_rel = 0, worst_peak = 0;
  auto rnd = [&](Shape s) { return oracle::random_tensor(s, rng); };
  auto run = [&](const std::string& label, Leaves leaves, const gradcheck::Build& build) {
    auto reports = gradcheck::check(build, leaves, {1e-3, 16, seed + static_cast<std::uint64_t>(checks)});
    ++checks;
    for (const auto& r : reports) {
      worst_rel = std::max(worst_rel, r.max_rel);
      worst_peak = std::max(worst_peak, r.peak_rel);
    }
    t.expect(gradcheck::all_ok(reports), label + "\n" + gradcheck::describe(reports));
  };
  auto p = [](GradTape& tape, const Leaves& l, const char* name) { return tape.parameter(name, l.at(name)); };

  {
    auto s = ops::ConvSpec::square(3, 3, 4).stride(1, 2);
    run("conv2d stride (1,2)", {{"x", rnd({5, 8, 3})}, {"w", rnd(s.weight_shape())}, {"b", rnd({4})}},
        [=](GradTape& tp, const Leaves& l) { return tp.conv2d(p(tp, l, "x"), p(tp, l, "w"), p(tp, l, "b"), s); });
  }
  {
    auto s = ops::ConvSpec::square(3, 2, 3).dilation(2, 2);
    run("conv2d dilation 2", {{"x", rnd({6, 7, 2})}, {"w", rnd(s.weight_shape())}, {"b", rnd({3})}},
        [=](GradTape& tp, const Leaves& l) { return tp.conv2d(p(tp, l, "x"), p(tp, l, "w"), p(tp, l, "b"), s); });
  }
  {
    ops::ConvSpec s;
    s.kernel_w = 4;
    s.stride_w = 2;
    s.in_channels = 3;
    s.out_channels = 2;
    run("deconv2d stride (1,2)", {{"x", rnd({3, 4, 3})}, {"w", rnd(ops::deconv_weight_shape(s))}, {"b", rnd({2})}},
        [=](GradTape& tp, const Leaves& l) { return tp.deconv2d(p(tp, l, "x"), p(tp, l, "w"), p(tp, l, "b"), s); });
  }
  {
    ops::ConvSpec s;
    s.kernel_w = 3;
    s.in_channels = 2;
    s.out_channels = 3;
    run("deconv2d stride 1", {{"x", rnd({2, 5, 2})}, {"w", rnd(ops::deconv_weight_shape(s))}, {"b", rnd({3})}},
        [=](GradTape& tp, const Leaves& l) { return tp.deconv2d(p(tp, l, "x"), p(tp, l, "w"), p(tp, l, "b"), s); });
  }
  run("maxpool2d", {{"x", rnd({4, 8, 2})}},
      [=](GradTape& tp, const Leaves& l) { return tp.maxpool2d(p(tp, l, "x"), {3, 3}, {1, 2}); });
  run("global_avg_pool + broadcast", {{"x", rnd({3, 4, 3})}}, [=](GradTape& tp, const Leaves& l) {
    return tp.broadcast_spatial(tp.global_avg_pool(p(tp, l, "x")), 2, 3);
  });
  run("dense", {{"x", rnd({1, 1, 6})}, {"w", rnd({6, 4})}, {"b", rnd({4})}},
      [=](GradTape& tp, const Leaves& l) { return tp.dense(p(tp, l, "x"), p(tp, l, "w"), p(tp, l, "b")); });
  run("relu", {{"x", rnd({3, 4, 2})}}, [=](GradTape& tp, const Leaves& l) { return tp.relu(p(tp, l, "x")); });
  run("sigmoid", {{"x", rnd({3, 4, 2})}}, [=](GradTape& tp, const Leaves& l) { return tp.sigmoid(p(tp, l, "x")); });
  run("add", {{"a", rnd({2, 3, 2})}, {"b", rnd({2, 3, 2})}},
      [=](GradTape& tp, const Leaves& l) { return tp.add(p(tp, l, "a"), p(tp, l, "b")); });
  run("scale_channels", {{"x", rnd({3, 4, 3})}, {"g", rnd({1, 1, 3})}},
      [=](GradTape& tp, const Leaves& l) { return tp.scale_channels(p(tp, l, "x"), p(tp, l, "g")); });
  run("concat_channels", {{"a", rnd({2, 3, 2})}, {"b", rnd({2, 3, 3})}},
      [=](GradTape& tp, const Leaves& l) { return concat(tp, p(tp, l, "a"), p(tp, l, "b")); });
  run("softmax_channels", {{"x", rnd({2, 3, 4})}},
      [=](GradTape& tp, const Leaves& l) { return tp.softmax_channels(p(tp, l, "x")); });
  {
    std::vector<std::uint8_t> labels(12);
    for (auto& v : labels) v = static_cast<std::uint8_t>(uniform(rng, 0, 3));
    const std::vector<float> weights{0.5f, 1.0f, 2.0f, 1.5f};
    run("softmax + cross_entropy", {{"x", rnd({3, 4, 4})}}, [=](GradTape& tp, const Leaves& l) {
      return tp.cross_entropy(tp.softmax_channels(p(tp, l, "x")), labels, weights);
    });
  }

  auto add_params = [&](Leaves& l, const std::vector<std::pair<std::string, Shape>>& shapes) {
    for (const auto& [name, shape] : shapes) l.emplace(name, rnd(shape));
  };
  auto conv_shapes = [](const std::string& stem, const ops::ConvSpec& s) {
    return std::vector<std::pair<std::string, Shape>>{{stem + ".w", s.weight_shape()},
                                                      {stem + ".b", {std::size_t(s.out_channels)}}};
  };
  auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
  {
    net::FireConfig cfg{8, 2, 4, 4};
    Leaves l{{"x", rnd({4, 6, 8})}};
    std::vector<std::pair<std::string, Shape>> shapes;
    append(shapes, conv_shapes("fire.squeeze", ops::ConvSpec::square(1, 8, 2)));
    append(shapes, conv_shapes("fire.expand1", ops::ConvSpec::square(1, 2, 4)));
    append(shapes, conv_shapes("fire.expand3", ops::ConvSpec::square(3, 2, 4)));
    add_params(l, shapes);
    run("fire", std::move(l), [=](GradTape& tp, const Leaves& lv) {
      return net::fire_forward(tp, p(tp, lv, "x"), cfg, lv, "fire");
    });
  }
  {
    net::FireDeconvConfig cfg{{8, 2, 3, 3}, 2, 4};
    Leaves l{{"x", rnd({3, 4, 8})}};
    std::vector<std::pair<std::string, Shape>> shapes;
    append(shapes, conv_shapes("fd.squeeze", ops::ConvSpec::square(1, 8, 2)));
    shapes.push_back({"fd.deconv.w", ops::deconv_weight_shape(cfg.deconv_spec())});
    shapes.push_back({"fd.deconv.b", {2}});
    append(shapes, conv_shapes("fd.expand1", ops::ConvSpec::square(1, 2, 3)));
    append(shapes, conv_shapes("fd.expand3", ops::ConvSpec::square(3, 2, 3)));
    add_params(l, shapes);
    run("fire-deconv", std::move(l), [=](GradTape& tp, const Leaves& lv) {
      return net::fire_deconv_forward(tp, p(tp, lv, "x"), cfg, lv, "fd");
    });
  }
  {
    net::SqueezeReweightConfig cfg{16, 4};
    // Post-relu features are nonnegative, as in the network.
    Leaves l{{"x", oracle::random_tensor({3, 5, 16}, rng, 0.0f, 2.0f)}};
    add_params(l, {{"sr.fc1.w", {16, 4}}, {"sr.fc1.b", {4}}, {"sr.fc2.w", {4, 16}}, {"sr.fc2.b", {16}}});
    run("squeeze-reweight", std::move(l), [=](GradTape& tp, const Leaves& lv) {
      return net::squeeze_reweight_forward(tp, p(tp, lv, "x"), cfg, lv, "sr");
    });
  }
  {
    net::EnlargementConfig cfg{8, 2, {1, 2, 3}, 5, 6};
    Leaves l{{"x", oracle::random_tensor({5, 6, 8}, rng, 0.0f, 2.0f)}};
    std::vector<std::pair<std::string, Shape>> shapes;
    for (int b = 1; b <= 3; ++b) append(shapes, conv_shapes("el.dilated" + std::to_string(b), ops::ConvSpec::square(3, 8, 2)));
    append(shapes, conv_shapes("el.pointwise", ops::ConvSpec::square(1, 8, 2)));
    shapes.push_back({"el.global.w", {8, 2}});
    shapes.push_back({"el.global.b", {2}});
    append(shapes, conv_shapes("el.fuse", ops::ConvSpec::square(1, 10, 2)));
    add_params(l, shapes);
    run("enlargement", std::move(l), [=](GradTape& tp, const Leaves& lv) {
      return net::enlargement_forward(tp, p(tp, lv, "x"), cfg, lv, "el");
    });
  }
  {
    auto graph = net::GraphConfig::reduced(4, 8, 32, {1, 2, 3});
    auto params = net::init_params(graph, seed);
    // Random nonzero biases so no unit starts exactly at a relu kink.
    for (auto& [name, tensor] : params.tensors) {
      if (name.ends_with(".b")) tensor = oracle::random_tensor(tensor.shape(), rng, -0.1f, 0.1f);
    }
    const Tensor input = oracle::random_tensor({8, 32, 5}, rng, -1.5f, 1.5f);
    auto reports = gradcheck::check(
        [&](GradTape& tp, const Leaves&) { return net::graph_forward(tp, tp.constant(input), params); },
        params.tensors, {1e-3, 6, seed + 100});
    std::size_t checked = 0;
    for (const auto& r : reports) {
      worst_rel = std::max(worst_rel, r.max_rel);
      worst_peak = std::max(worst_peak, r.peak_rel);
      checked += r.checked;
    }
    ++checks;
    t.expect(reports.size() == params.tensors.size(), "full model: every parameter tensor received a gradient");
    t.expect(gradcheck::all_ok(reports), "full model 8x32x5, base 4\n" + gradcheck::describe(reports));
    t.expect(checked > 0, "full model: samples checked");
  }

  return t.done(std::to_string(checks) + " gradient checks (14 ops, 4 composite layers, full 8x32x5 model); worst "
                "relative error " + fmt("%.2g", worst_rel) + ", worst at max-magnitude element " + fmt("%.2g", worst_peak));
}

// ---------------------------------------------------------------------------

Outcome shape_pipeline() {
  Tally t;
  const auto graph = net::GraphConfig::pointseg();
  const auto params = net::init_params(graph, 11);
  const auto frame = proj::project(PointCloud{proj::synthesize_scene(11).points});
  net::Trace trace;
  const Tensor probs = net::model_forward(frame, params, &trace);

  auto find = [&](const std::string& stage) -> Shape {
    for (const auto& e : trace) {
      if (e.stage == stage) return e.shape;
    }
    return {};
  };
  t.expect(find("sr3") == Shape{64, 64, 512}, "feature entering the enlargement layer is 64x64x512, got " +
                                                  shape_to_string(find("sr3")));
  const std::array<const char*, 4> encoder{"input", "conv1", "pool1", "pool2"};
  const std::array<std::size_t, 4> widths{512, 256, 128, 64};
  for (std::size_t i = 0; i < 4; ++i) {
    const Shape s = find(encoder[i]);
    t.expect(s.size() == 3 && s[1] == widths[i], std::string(encoder[i]) + " width " + std::to_string(widths[i]));
  }
  bool heights = true;
  for (const auto& e : trace) heights = heights && e.shape[0] == 64;
  t.expect(heights, "height 64 at every traced stage");
  t.expect(probs.shape() == Shape{64, 512, 4}, "output 64x512x4");
  double worst = 0;
  for (std::size_t px = 0; px < 64 * 512; ++px) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += probs[px * 4 + k];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  t.expect(worst <= 1e-5, "probability sums within 1e-5 of 1");
  std::string widths_seen;
  for (const char* st : encoder) widths_seen += (widths_seen.empty() ? "" : "/") + std::to_string(find(st)[1]);
  return t.done("EL input " + shape_to_string(find("sr3")) + ", encoder widths " + widths_seen +
                ", output " + shape_to_string(probs.shape()) + ", max |sum-1| " + fmt("%.2g", worst));
}

// ---------------------------------------------------------------------------

Outcome projection_properties(std::uint64_t seed) {
  Tally t;
  const proj::ProjectionConfig cfg;

  // Round trip: labels survive projection and back-projection.
  int scenes = 0;
  for (std::uint64_t s = seed; s < seed + 5; ++s, ++scenes) {
    const LabeledCloud scene = proj::synthesize_scene(s, cfg);
    const auto frame = proj::project_labeled(scene, cfg);
    const auto back = proj::backproject(frame, *frame.labels, PointCloud{scene.points});
    t.expect(back.labels == scene.labels, "round trip labels, scene " + std::to_string(s));
  }

  // Rotation about z by k columns shifts the image by k columns.
  const LabeledCloud scene = proj::synthesize_scene(seed, cfg);
  const auto base = proj::project(PointCloud{scene.points}, cfg);
  const double step = cfg.col_resolution() * std::numbers::pi / 180.0;
  for (int k : {1, 7, 40}) {
    PointCloud rotated;
    const double a = k * step, ca = std::cos(a), sa = std::sin(a);
    for (const Point& p : scene.points) {
      rotated.points.push_back({static_cast<float>(ca * p.x - sa * p.y), static_cast<float>(sa * p.x + ca * p.y), p.z,
                                p.intensity});
    }
    const auto shifted = proj::project(rotated, cfg);
    bool ok = true;
    for (std::size_t r = 0; r < base.height(); ++r)
      for (std::size_t c = 0; c + k < base.width(); ++c) {
        const std::size_t i = r * base.width() + c, j = i + k;
        ok = ok && base.occupancy[i] == shifted.occupancy[j] && base.source_index[i] == shifted.source_index[j];
      }
    for (std::size_t r = 0; r < base.height(); ++r)
      for (std::size_t c = 0; c < std::size_t(k); ++c) ok = ok && !shifted.occupancy[r * base.width() + c];
    t.expect(ok, "rotation by " + std::to_string(k) + " columns shifts the image");
  }

  // Collisions: the nearer point wins regardless of order.
  for (bool near_first : {true, false}) {
    PointCloud c;
    Point near{5.0f, 0.0f, 0.0f, 0.1f}, far{8.0f, 0.0f, 0.0f, 0.9f};
    c.points = near_first ? std::vector<Point>{near, far} : std::vector<Point>{far, near};
    const auto f = proj::project(c, cfg);
    const auto px = proj::pixel_of(near, cfg);
    const std::size_t i = std::size_t(px->row) * f.width() + px->col;
    t.expect(f.channels[i * 5 + proj::kRange] == 5.0f && f.source_index[i] == (near_first ? 0 : 1),
             "nearest point wins a collision");
  }

  // Hand-computed pixel.
  {
    PointCloud c{{{10.0f, 0.0f, 0.0f, 0.5f}}};
    const auto f = proj::project(c, cfg);
    const std::size_t i = 4 * f.width() + 256;
    const bool hit = f.occupancy[i] && f.channels[i * 5 + 0] == 10.0f && f.channels[i * 5 + 1] == 0.0f &&
                     f.channels[i * 5 + 2] == 0.0f && f.channels[i * 5 + 3] == 0.5f && f.channels[i * 5 + 4] == 10.0f;
    t.expect(hit, "point (10,0,0) lands in row 4, col 256 with channels (10,0,0,0.5,10)");
  }
  return t.done(std::to_string(scenes) + " scenes round-tripped, rotation shifts k=1/7/40, collision both orders, "
                "(10,0,0) -> row 4 col 256");
}

// ---------------------------------------------------------------------------

Outcome overfit(const OverfitOptions& opt) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const proj::ProjectionConfig pc;
  std::vector<net::Example> examples;
  std::vector<proj::SphericalFrame> frames;
  for (int i = 0; i < opt.frames; ++i) {
    auto frame = proj::project_labeled(proj::synthesize_scene(opt.seed + i, pc), pc);
    examples.push_back({frame.channels, *frame.labels});
    frames.push_back(std::move(frame));
  }
  auto params = net::init_params(net::GraphConfig::reduced(opt.base_channels, pc.height, pc.width, {6, 9, 12}), opt.seed);
  auto state = net::AdagradState::zeros_like(params);
  net::TrainConfig tc;
  tc.learning_rate = opt.learning_rate;
  tc.class_weights = opt.class_weights;

  auto evaluate = [&] {
    metrics::ClassCounts counts;
    for (const auto& f : frames) counts = metrics::accumulate(net::predict(f, params), *f.labels, counts, f.occupancy);
    return metrics::finalize(counts);
  };

  double best = 0;
  int step = 0;
  double first_loss = 0, last_loss = 0;
  metrics::EvalReport report;
  for (std::uint64_t epoch = 0; step < opt.max_steps; ++epoch) {
    for (const auto& group : io::batch_indices(examples.size(), opt.batch, opt.seed, epoch)) {
      if (step >= opt.max_steps) break;
      std::vector<net::Example> batch;
      for (std::size_t i : group) batch.push_back(examples[i]);
      last_loss = net::train_step(params, batch, state, tc);
      if (step == 0) first_loss = last_loss;
      ++step;
      if (step % opt.eval_every == 0 || step == opt.max_steps) {
        report = evaluate();
        best = report.mean_iou(true).value_or(0.0);
        if (opt.verbose) {
          std::fprintf(stderr, "  step %d loss %.4f fg-IoU %.3f (car %.3f ped %.3f cyc %.3f) %.0fs\n", step, last_loss,
                       best, report.classes[1].iou.value_or(-1), report.classes[2].iou.value_or(-1),
                       report.classes[3].iou.value_or(-1),
                       std::chrono::duration<double>(Clock::now() - start).count());
        }
        if (best > opt.target_iou) break;
      }
    }
    if (best > opt.target_iou) break;
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {best > opt.target_iou,
          "mean foreground IoU " + fmt("%.3f", best) + " after " + std::to_string(step) + " steps (car " +
              fmt("%.3f", report.classes[1].iou.value_or(-1)) + ", pedestrian " +
              fmt("%.3f", report.classes[2].iou.value_or(-1)) + ", cyclist " +
              fmt("%.3f", report.classes[3].iou.value_or(-1)) + "), loss " + fmt("%.4f", first_loss) + " -> " +
              fmt("%.4f", last_loss) + ", " + fmt("%.0f", secs) + " s"};
}

// ---------------------------------------------------------------------------

Outcome ransac(std::uint64_t seed) {
  Tally t;
  double worst_angle = 0, worst_recall = 1;
  for (std::uint64_t s = seed; s < seed + 20; ++s) {
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> u(-1, 1);
    std::normal_distribution<double> noise(0, 0.02);
    // Random normal within 30 degrees of +z.
    const double tilt = 0.5 * std::abs(u(rng)), az = std::numbers::pi * u(rng);
    const double nx = std::sin(tilt) * std::cos(az), ny = std::sin(tilt) * std::sin(az), nz = std::cos(tilt);
    const double d = 1.7 * u(rng);
    // Orthonormal basis of the plane.
    double ax = -ny, ay = nx, az2 = 0;
    double an = std::hypot(ax, ay);
    if (an < 1e-9) ax = 1, ay = 0, an = 1;
    ax /= an, ay /= an;
    const double bx = ny * az2 - nz * ay, by = nz * ax - nx * az2, bz = nx * ay - ny * ax;

    std::vector<Point> pts;
    for (int i = 0; i < 900; ++i) {
      const double a = 20 * u(rng), b = 20 * u(rng), e = noise(rng);
      pts.push_back({static_cast<float>(a * ax + b * bx + (e - d) * nx), static_cast<float>(a * ay + b * by + (e - d) * ny),
                     static_cast<float>(a * az2 + b * bz + (e - d) * nz), 0});
    }
    for (int i = 0; i < 100; ++i) {
      const double a = 20 * u(rng), b = 20 * u(rng), off = 1.0 + 4.0 * std::abs(u(rng));
      pts.push_back({static_cast<float>(a * ax + b * bx + (off - d) * nx), static_cast<float>(a * ay + b * by + (off - d) * ny),
                     static_cast<float>(a * az2 + b * bz + (off - d) * nz), 0});
    }
    std::shuffle(pts.begin(), pts.end(), rng);
    std::vector<bool> on_plane(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      on_plane[i] = std::abs(nx * pts[i].x + ny * pts[i].y + nz * pts[i].z + d) < 0.5;
    }
    post::RansacConfig cfg;
    cfg.seed = s;
    const auto fit = post::ransac_plane(pts, cfg);
    const double cosang = std::abs(fit.plane.nx * nx + fit.plane.ny * ny + fit.plane.nz * nz);
    const double angle = std::acos(std::min(1.0, cosang)) * 180.0 / std::numbers::pi;
    std::size_t recovered = 0, total = 0;
    std::set<std::size_t> inl(fit.inliers.begin(), fit.inliers.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!on_plane[i]) continue;
      ++total;
      recovered += inl.count(i);
    }
    const double recall = double(recovered) / double(total);
    worst_angle = std::max(worst_angle, angle);
    worst_recall = std::min(worst_recall, recall);
    t.expect(angle < 2.0 && recall > 0.99, "seed " + std::to_string(s) + ": angle " + fmt("%.3f", angle) +
                                               " recall " + fmt("%.4f", recall));
  }

  int scenes = 0;
  for (std::uint64_t s = seed; s < seed + 100; ++s, ++scenes) {
    std::mt19937_64 rng(s);
    proj::ProjectionConfig pc;
    pc.width = 128;
    pc.height = 32;
    LabeledCloud c = proj::synthesize_scene(s, pc);
    for (auto& l : c.labels) {
      if (uniform(rng, 0, 9) == 0) l = static_cast<std::uint8_t>(uniform(rng, 0, 3));
    }
    post::RansacConfig cfg;
    cfg.seed = s;
    const auto once = post::refine(c, cfg);
    const auto twice = post::refine(once.cloud, cfg);
    bool promoted = false;
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
      promoted = promoted || (c.labels[i] == 0 && once.cloud.labels[i] != 0);
      promoted = promoted || (c.labels[i] != once.cloud.labels[i] && once.cloud.labels[i] != 0);
    }
    t.expect(!promoted, "scene " + std::to_string(s) + ": refine only relabels to background");
    t.expect(twice.cloud == once.cloud, "scene " + std::to_string(s) + ": refine is idempotent");
  }
  return t.done("20 seeds: worst normal error " + fmt("%.3f", worst_angle) + " deg, worst inlier recall " +
                fmt("%.4f", worst_recall) + "; " + std::to_string(scenes) + " scenes idempotent, no promotions");
}

// ---------------------------------------------------------------------------

Outcome metrics_oracle(std::uint64_t seed) {
  Tally t;
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = uniform(rng, 1, 12), w = uniform(rng, 1, 20);
    ClassMap pred(h, w), gt(h, w);
    std::vector<std::uint8_t> occ(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      pred.ids[i] = static_cast<std::uint8_t>(uniform(rng, 0, 3));
      gt.ids[i] = static_cast<std::uint8_t>(uniform(rng, 0, 3));
      occ[i] = uniform(rng, 0, 4) != 0;
    }
    const auto report = metrics::finalize(metrics::accumulate(pred, gt, {}, occ));
    for (int k = 0; k < kNumClasses; ++k) {
      std::set<std::size_t> P, G, I, U;
      for (std::size_t i = 0; i < h * w; ++i) {
        if (!occ[i]) continue;
        if (pred.ids[i] == k) P.insert(i);
        if (gt.ids[i] == k) G.insert(i);
      }
      std::set_intersection(P.begin(), P.end(), G.begin(), G.end(), std::inserter(I, I.end()));
      std::set_union(P.begin(), P.end(), G.begin(), G.end(), std::inserter(U, U.end()));
      auto frac = [](std::size_t a, std::size_t b) -> std::optional<double> {
        if (b == 0) return std::nullopt;
        return double(a) / double(b);
      };
      const auto& c = report.classes[k];
      t.expect(c.precision == frac(I.size(), P.size()) && c.recall == frac(I.size(), G.size()) &&
                   c.iou == frac(I.size(), U.size()),
               "trial " + std::to_string(trial) + " class " + std::to_string(k));
    }
  }
  // pred {a, b} vs gt {b, c} for class 1.
  ClassMap pred(1, 3), gt(1, 3);
  pred.ids = {1, 1, 0};
  gt.ids = {0, 1, 1};
  const auto r = metrics::finalize(metrics::accumulate(pred, gt, {}));
  t.expect(r.classes[1].precision == 0.5 && r.classes[1].recall == 0.5 && r.classes[1].iou == 1.0 / 3.0,
           "worked example P = R = 0.5, IoU = 1/3");
  return t.done("50 random map pairs match set-based counts exactly; worked example P=R=0.5, IoU=1/3");
}

// ---------------------------------------------------------------------------

namespace {

bool read_ppm(const fs::path& path, std::size_t& w, std::size_t& h, std::vector<unsigned char>& rgb) {
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  if (!(is >> magic >> w >> h >> maxval) || magic != "P6" || maxval != 255) return false;
  is.get();
  rgb.resize(w * h * 3);
  return static_cast<bool>(is.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size())));
}

void write_npy_by_hand(const fs::path& path, const std::string& header_dict, const std::vector<float>& data) {
  std::string header = header_dict;
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::ofstream os(path, std::ios::binary);
  os.write("\x93NUMPY\x01\x00", 8);
  const unsigned char len[2] = {static_cast<unsigned char>(header.size() & 0xFF),
                                static_cast<unsigned char>(header.size() >> 8)};
  os.write(reinterpret_cast<const char*>(len), 2);
  os << header;
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
}

}  // namespace

Outcome format_round_trips(std::uint64_t seed) {
  Tally t;
  std::mt19937_64 rng(seed);
  const auto dir = scratch_dir("formats");

  // Checkpoint.
  {
    const auto params = net::init_params(net::GraphConfig::reduced(16, 64, 512, {6, 9, 12}), seed);
    net::save_checkpoint(params, dir / "model.pseg");
    const auto loaded = net::load_checkpoint(dir / "model.pseg");
    const auto frame = proj::project_labeled(proj::synthesize_scene(seed), {});
    const Tensor a = net::model_forward(frame, params), b = net::model_forward(frame, loaded);
    t.expect(loaded == params, "checkpoint restores every tensor and the graph configuration");
    t.expect(a.values() == b.values(), "checkpoint forward outputs bit-identical");
  }

  // Array container.
  {
    std::vector<float> data(64 * 512 * 6);
    for (auto& v : data) v = std::uniform_real_distribution<float>(-50, 50)(rng);
    write_npy_by_hand(dir / "good.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (64, 512, 6), }", data);
    bool accepted = false;
    try {
      accepted = io::load_frame_array(dir / "good.npy").values() == data;
    } catch (const std::exception&) {
    }
    t.expect(accepted, "hand-written conformant container read exactly");

    const std::vector<std::pair<std::string, std::string>> bad{
        {"fortran.npy", "{'descr': '<f4', 'fortran_order': True, 'shape': (64, 512, 6), }"},
        {"shape.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (64, 512, 5), }"},
        {"dtype.npy", "{'descr': '<i4', 'fortran_order': False, 'shape': (64, 512, 6), }"}};
    for (const auto& [name, header] : bad) {
      write_npy_by_hand(dir / name, header, data);
      bool rejected = false;
      try {
        io::load_frame_array(dir / name);
      } catch (const DataError&) {
        rejected = true;
      }
      t.expect(rejected, name + " rejected");
    }
  }

  // P6 image.
  {
    ClassMap map(64, 512);
    for (auto& id : map.ids) id = static_cast<std::uint8_t>(uniform(rng, 0, 3));
    io::save_class_map_image(map, dir / "map.ppm");
    std::size_t w = 0, h = 0;
    std::vector<unsigned char> rgb;
    bool same = read_ppm(dir / "map.ppm", w, h, rgb) && w == 512 && h == 64;
    const unsigned char palette[4][3] = {{0, 0, 0}, {0, 0, 255}, {0, 255, 0}, {255, 0, 0}};
    for (std::size_t i = 0; same && i < map.ids.size(); ++i) {
      same = std::memcmp(&rgb[i * 3], palette[map.ids[i]], 3) == 0;
    }
    t.expect(same, "P6 class map decodes to the written classes");
  }

  // Labeled cloud text.
  {
    LabeledCloud c;
    for (int i = 0; i < 500; ++i) {
      auto f = [&] { return std::uniform_real_distribution<float>(-80, 80)(rng); };
      c.points.push_back({f(), f(), f(), 0});
      c.labels.push_back(static_cast<std::uint8_t>(uniform(rng, 0, 3)));
    }
    io::save_labeled_cloud(c, dir / "cloud.txt");
    std::ifstream is(dir / "cloud.txt");
    LabeledCloud parsed;
    std::string line;
    while (std::getline(is, line)) {
      Point p;
      int label;
      if (std::sscanf(line.c_str(), "%f %f %f %d", &p.x, &p.y, &p.z, &label) != 4) break;
      parsed.points.push_back(p);
      parsed.labels.push_back(static_cast<std::uint8_t>(label));
    }
    t.expect(parsed == c, "labeled cloud text parsed by an independent reader");
    t.expect(io::load_labeled_cloud(dir / "cloud.txt") == c, "labeled cloud round trip through its own reader");
  }
  fs::remove_all(dir);
  return t.done("checkpoint forward bit-identical; container accepted + 3 malformed variants rejected; "
                "P6 and labeled-cloud text round trips");
}

// ---------------------------------------------------------------------------

Outcome bench_report(double* forward_median_ms) {
  Tally t;
  cli::RunConfig cfg;
  cfg.iterations = 3;
  cfg.warmup = 1;
  cfg.seed = 13;
  const auto stats = cli::run_bench(cfg);
  const std::vector<std::string> expected{"projection", "forward", "argmax", "backprojection", "ransac"};
  t.expect(stats.size() == expected.size(), "five stages reported");
  std::string summary;
  for (std::size_t i = 0; i < std::min(stats.size(), expected.size()); ++i) {
    const auto& s = stats[i];
    t.expect(s.stage == expected[i], "stage " + expected[i]);
    t.expect(s.samples_ms.size() == 3, s.stage + " count equals iterations");
    t.expect(std::isfinite(s.median_ms) && s.median_ms >= 0 && s.p95_ms >= s.median_ms, s.stage + " timings sane");
    summary += (summary.empty() ? "" : ", ") + s.stage + " " + fmt("%.2f", s.median_ms) + " ms";
    if (s.stage == "forward" && forward_median_ms) *forward_median_ms = s.median_ms;
  }
  return t.done("medians: " + summary + " (reference GPU forward: 12 ms, not asserted)");
}

}  // namespace suites
