#pragma once

// Composite layers, written once against an execution context: Eager for
// inference, GradTape when gradients are needed. `id` is the layer id used
// as the parameter-name prefix.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pointseg/eager.hpp"
#include "pointseg/error.hpp"
#include "pointseg/network/graph.hpp"
#include "pointseg/network/params.hpp"

namespace pointseg::net {

template <class Ctx>
using ValueOf = typename Ctx::Value;

/// One intermediate feature seen by graph_forward.
struct TraceEntry {
  std::string stage;
  Shape shape;
  bool finite = true;
};
using Trace = std::vector<TraceEntry>;

namespace detail {

inline const Tensor& lookup(const TensorMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ShapeError("layer " + name.substr(0, name.find('.')) + ": missing tensor " + name);
  return it->second;
}

template <class Ctx>
decltype(auto) param(Ctx& ctx, const TensorMap& params, const std::string& name) {
  return ctx.parameter(name, lookup(params, name));
}

template <class Ctx>
ValueOf<Ctx> conv(Ctx& ctx, const ValueOf<Ctx>& x, const TensorMap& p, const std::string& stem,
                  const ops::ConvSpec& spec) {
  return ctx.conv2d(x, param(ctx, p, stem + ".w"), param(ctx, p, stem + ".b"), spec);
}

template <class Ctx>
ValueOf<Ctx> dense(Ctx& ctx, const ValueOf<Ctx>& x, const TensorMap& p, const std::string& stem) {
  return ctx.dense(x, param(ctx, p, stem + ".w"), param(ctx, p, stem + ".b"));
}

template <class Ctx>
void require_channels(Ctx& ctx, const ValueOf<Ctx>& x, int channels, const std::string& id) {
  const Tensor& v = ctx.value(x);
  require_feature_map(v, id.c_str());
  if (v.channels() != static_cast<std::size_t>(channels)) {
    throw ShapeError("layer " + id + ": input has " + std::to_string(v.channels()) + " channels, expected " +
                     std::to_string(channels));
  }
}

template <class Ctx>
ValueOf<Ctx> expand(Ctx& ctx, const ValueOf<Ctx>& s, const FireConfig& cfg, const TensorMap& p,
                    const std::string& id) {
  auto e1 = ctx.relu(conv(ctx, s, p, id + ".expand1", ops::ConvSpec::square(1, cfg.squeeze_channels, cfg.expand1_channels)));
  auto e3 = ctx.relu(conv(ctx, s, p, id + ".expand3", ops::ConvSpec::square(3, cfg.squeeze_channels, cfg.expand3_channels)));
  return concat(ctx, e1, e3);
}

}  // namespace detail

/// relu(1x1 squeeze), then concat(relu(1x1 expand), relu(3x3 expand)).
template <class Ctx>
ValueOf<Ctx> fire_forward(Ctx& ctx, const ValueOf<Ctx>& x, const FireConfig& cfg, const TensorMap& params,
                          const std::string& id) {
  cfg.validate();
  detail::require_channels(ctx, x, cfg.in_channels, id);
  auto s = ctx.relu(detail::conv(ctx, x, params, id + ".squeeze",
                                 ops::ConvSpec::square(1, cfg.in_channels, cfg.squeeze_channels)));
  return detail::expand(ctx, s, cfg, params, id);
}

/// Fire module with a transposed conv between squeeze and expand.
template <class Ctx>
ValueOf<Ctx> fire_deconv_forward(Ctx& ctx, const ValueOf<Ctx>& x, const FireDeconvConfig& cfg,
                                 const TensorMap& params, const std::string& id) {
  cfg.fire.validate();
  detail::require_channels(ctx, x, cfg.fire.in_channels, id);
  auto s = ctx.relu(detail::conv(ctx, x, params, id + ".squeeze",
                                 ops::ConvSpec::square(1, cfg.fire.in_channels, cfg.fire.squeeze_channels)));
  auto u = ctx.relu(ctx.deconv2d(s, detail::param(ctx, params, id + ".deconv.w"),
                                 detail::param(ctx, params, id + ".deconv.b"), cfg.deconv_spec()));
  return detail::expand(ctx, u, cfg.fire, params, id);
}

/// Channel reweighting: gate = sigmoid(fc2(relu(fc1(mean over H x W)))),
/// output channel n = input channel n * gate[n].
template <class Ctx>
ValueOf<Ctx> squeeze_reweight_forward(Ctx& ctx, const ValueOf<Ctx>& x, const SqueezeReweightConfig& cfg,
                                      const TensorMap& params, const std::string& id) {
  detail::require_channels(ctx, x, cfg.channels, id);
  auto descriptor = ctx.global_avg_pool(x);
  auto hidden = ctx.relu(detail::dense(ctx, descriptor, params, id + ".fc1"));
  auto gate = ctx.sigmoid(detail::dense(ctx, hidden, params, id + ".fc2"));
  return ctx.scale_channels(x, gate);
}

/// Three dilated 3x3 branches, a 1x1 branch and a global-average branch,
/// concatenated and fused by a 1x1 conv to a quarter of the concat width.
template <class Ctx>
ValueOf<Ctx> enlargement_forward(Ctx& ctx, const ValueOf<Ctx>& x, const EnlargementConfig& cfg,
                                 const TensorMap& params, const std::string& id) {
  detail::require_channels(ctx, x, cfg.in_channels, id);
  const Tensor& v = ctx.value(x);
  if (v.height() != static_cast<std::size_t>(cfg.height) || v.width() != static_cast<std::size_t>(cfg.width)) {
    throw ShapeError("layer " + id + ": input extent " + std::to_string(v.height()) + "x" +
                     std::to_string(v.width()) + " does not match the configured " + std::to_string(cfg.height) +
                     "x" + std::to_string(cfg.width));
  }
  const std::size_t h = v.height(), w = v.width();
  std::vector<ValueOf<Ctx>> branches;
  for (int b = 0; b < 3; ++b) {
    auto spec = ops::ConvSpec::square(3, cfg.in_channels, cfg.branch_channels).dilation(cfg.rates[b], cfg.rates[b]);
    branches.push_back(ctx.relu(detail::conv(ctx, x, params, id + ".dilated" + std::to_string(b + 1), spec)));
  }
  auto pointwise = ctx.relu(
      detail::conv(ctx, x, params, id + ".pointwise", ops::ConvSpec::square(1, cfg.in_channels, cfg.branch_channels)));
  auto global = ctx.broadcast_spatial(
      ctx.relu(detail::dense(ctx, ctx.global_avg_pool(x), params, id + ".global")), h, w);
  auto joined = concat(ctx, branches[0], branches[1], branches[2], pointwise, global);
  return ctx.relu(detail::conv(ctx, joined, params, id + ".fuse",
                               ops::ConvSpec::square(1, cfg.concat_channels(), cfg.out_channels())));
}

/// Full network on a normalized H x W x 5 input; returns per-pixel class
/// probabilities (H x W x num_classes).
template <class Ctx>
ValueOf<Ctx> graph_forward(Ctx& ctx, const ValueOf<Ctx>& input, const ModelParams& model, Trace* trace = nullptr) {
  const GraphConfig& g = model.graph;
  const TensorMap& p = model.tensors;
  auto note = [&](const char* stage, const ValueOf<Ctx>& v) {
    if (!trace) return;
    const Tensor& t = ctx.value(v);
    bool finite = true;
    for (float e : t.data()) finite = finite && std::isfinite(e);
    trace->push_back({stage, t.shape(), finite});
  };
  const Tensor& in = ctx.value(input);
  if (in.rank() != 3 || in.height() != static_cast<std::size_t>(g.height) ||
      in.width() != static_cast<std::size_t>(g.width) || in.channels() != static_cast<std::size_t>(g.in_channels)) {
    throw ShapeError("model input has shape " + shape_to_string(in.shape()) + ", expected (" +
                     std::to_string(g.height) + ", " + std::to_string(g.width) + ", " + std::to_string(g.in_channels) +
                     ")");
  }
  note("input", input);

  auto c1 = ctx.relu(detail::conv(ctx, input, p, "conv1.conv", g.conv1()));
  note("conv1", c1);

  auto block = [&](const ValueOf<Ctx>& x, int b) {
    auto f = x;
    for (int i = 1; i <= 3; ++i) {
      const int idx = (b - 1) * 3 + i;
      f = fire_forward(ctx, f, g.fire(idx), p, "fire" + std::to_string(idx));
    }
    return squeeze_reweight_forward(ctx, f, g.squeeze_reweight(b), p, "sr" + std::to_string(b));
  };

  auto s1 = block(c1, 1);
  note("sr1", s1);
  auto p1 = ctx.maxpool2d(s1, g.pool_kernel(), g.pool_stride());
  note("pool1", p1);
  auto s2 = block(p1, 2);
  note("sr2", s2);
  auto p2 = ctx.maxpool2d(s2, g.pool_kernel(), g.pool_stride());
  note("pool2", p2);
  auto s3 = block(p2, 3);
  note("sr3", s3);
  auto el = enlargement_forward(ctx, s3, g.enlargement(), p, "el");
  note("el", el);

  auto d1 = ctx.add(fire_deconv_forward(ctx, concat(ctx, el, s3), g.fire_deconv(1), p, "fdeconv1"), s2);
  note("fdeconv1", d1);
  auto d2 = ctx.add(fire_deconv_forward(ctx, d1, g.fire_deconv(2), p, "fdeconv2"), s1);
  note("fdeconv2", d2);
  auto d3 = ctx.add(fire_deconv_forward(ctx, d2, g.fire_deconv(3), p, "fdeconv3"), c1);
  note("fdeconv3", d3);
  auto d4 = fire_deconv_forward(ctx, d3, g.fire_deconv(4), p, "fdeconv4");
  note("fdeconv4", d4);

  auto logits = detail::conv(ctx, d4, p, "head.conv", g.head());
  note("head", logits);
  auto probs = ctx.softmax_channels(logits);
  note("output", probs);
  return probs;
}

}  // namespace pointseg::net
