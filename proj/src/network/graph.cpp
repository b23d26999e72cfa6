#include "pointseg/network/graph.hpp"

#include "pointseg/error.hpp"

namespace pointseg::net {

namespace {

ops::ConvSpec conv(int kernel, int in, int out) { return ops::ConvSpec::square(kernel, in, out); }

void add_conv(LayerSpec& layer, const std::string& stem, const ops::ConvSpec& s) {
  const auto fan_in = static_cast<std::size_t>(s.kernel_h * s.kernel_w * s.in_channels);
  layer.tensors.push_back({layer.id + "." + stem + ".w", s.weight_shape(), fan_in, false});
  layer.tensors.push_back({layer.id + "." + stem + ".b", {static_cast<std::size_t>(s.out_channels)}, fan_in, true});
}

void add_dense(LayerSpec& layer, const std::string& stem, int in, int out) {
  const auto i = static_cast<std::size_t>(in), o = static_cast<std::size_t>(out);
  layer.tensors.push_back({layer.id + "." + stem + ".w", {i, o}, i, false});
  layer.tensors.push_back({layer.id + "." + stem + ".b", {o}, i, true});
}

void add_fire(LayerSpec& layer, const FireConfig& f) {
  add_conv(layer, "squeeze", conv(1, f.in_channels, f.squeeze_channels));
  add_conv(layer, "expand1", conv(1, f.squeeze_channels, f.expand1_channels));
  add_conv(layer, "expand3", conv(3, f.squeeze_channels, f.expand3_channels));
}

}  // namespace

void FireConfig::validate() const {
  if (in_channels < 1 || squeeze_channels < 1 || expand1_channels < 1 || expand3_channels < 1) {
    throw ShapeError("fire config: channel counts must be positive");
  }
  if (squeeze_channels > in_channels) throw ShapeError("fire config: squeeze_channels exceeds in_channels");
}

ops::ConvSpec FireDeconvConfig::deconv_spec() const {
  ops::ConvSpec s;
  s.kernel_h = 1;
  s.kernel_w = kernel_w;
  s.stride_h = 1;
  s.stride_w = stride_w;
  s.in_channels = fire.squeeze_channels;
  s.out_channels = fire.squeeze_channels;
  return s;
}

GraphConfig GraphConfig::reduced(int base_channels, int height, int width, std::array<int, 3> rates) {
  GraphConfig g;
  g.base_channels = base_channels;
  g.height = height;
  g.width = width;
  g.el_rates = rates;
  return g;
}

void GraphConfig::validate() const {
  if (base_channels < 2 || base_channels % 2 != 0) throw ShapeError("graph: base_channels must be even and >= 2");
  if (height < 1 || width < 8 || width % 8 != 0) throw ShapeError("graph: width must be a positive multiple of 8");
  if (in_channels != 5) throw ShapeError("graph: input must have 5 channels");
  if (num_classes < 2) throw ShapeError("graph: need at least 2 classes");
  if (sr_reduction < 1) throw ShapeError("graph: sr_reduction must be >= 1");
  for (int r : el_rates) {
    if (r < 1) throw ShapeError("graph: dilation rates must be >= 1");
  }
  for (float s : input_std) {
    if (!(s > 0.0f)) throw ShapeError("graph: input_std entries must be positive");
  }
}

ops::ConvSpec GraphConfig::conv1() const { return conv(3, in_channels, base_channels).stride(1, 2); }

FireConfig GraphConfig::fire(int index) const {
  if (index < 1 || index > 9) throw std::out_of_range("fire index must be 1..9");
  const int block = (index - 1) / 3;
  const int c = base_channels;
  const int out = c << (block + 1);
  const int squeeze = (c << block) / 2;
  int in = out;
  if ((index - 1) % 3 == 0) in = block == 0 ? c : (c << block);
  return FireConfig{in, squeeze, out / 2, out / 2};
}

SqueezeReweightConfig GraphConfig::squeeze_reweight(int index) const {
  if (index < 1 || index > 3) throw std::out_of_range("SR index must be 1..3");
  return SqueezeReweightConfig{base_channels << index, sr_reduction};
}

EnlargementConfig GraphConfig::enlargement() const {
  const int in = base_channels * 8;
  return EnlargementConfig{in, in / 4, el_rates, height, width / 8};
}

FireDeconvConfig GraphConfig::fire_deconv(int index) const {
  const int c = base_channels;
  switch (index) {
    case 1: {
      const int in = 8 * c + enlargement().out_channels();
      return FireDeconvConfig{{in, in / 4, 2 * c, 2 * c}, 2, 4};
    }
    case 2: return FireDeconvConfig{{4 * c, c, c, c}, 2, 4};
    case 3: return FireDeconvConfig{{2 * c, c / 2, c / 2, c / 2}, 1, 3};
    case 4: return FireDeconvConfig{{c, c / 4 > 0 ? c / 4 : 1, c / 2, c / 2}, 2, 4};
    default: throw std::out_of_range("fdeconv index must be 1..4");
  }
}

ops::ConvSpec GraphConfig::head() const { return conv(3, base_channels, num_classes); }

std::array<int, 4> GraphConfig::encoder_widths() const { return {width, width / 2, width / 4, width / 8}; }

std::vector<LayerSpec> layer_table(const GraphConfig& g) {
  g.validate();
  std::vector<LayerSpec> table;
  auto layer = [&](std::string id) -> LayerSpec& {
    table.push_back(LayerSpec{std::move(id), {}});
    return table.back();
  };

  add_conv(layer("conv1"), "conv", g.conv1());
  for (int block = 0; block < 3; ++block) {
    for (int i = 1; i <= 3; ++i) {
      const int idx = block * 3 + i;
      add_fire(layer("fire" + std::to_string(idx)), g.fire(idx));
    }
    const auto sr = g.squeeze_reweight(block + 1);
    LayerSpec& l = layer("sr" + std::to_string(block + 1));
    add_dense(l, "fc1", sr.channels, sr.hidden());
    add_dense(l, "fc2", sr.hidden(), sr.channels);
  }

  const auto el = g.enlargement();
  LayerSpec& e = layer("el");
  for (int b = 0; b < 3; ++b) {
    add_conv(e, "dilated" + std::to_string(b + 1), conv(3, el.in_channels, el.branch_channels));
  }
  add_conv(e, "pointwise", conv(1, el.in_channels, el.branch_channels));
  add_dense(e, "global", el.in_channels, el.branch_channels);
  add_conv(e, "fuse", conv(1, el.concat_channels(), el.out_channels()));

  for (int i = 1; i <= 4; ++i) {
    const auto fd = g.fire_deconv(i);
    LayerSpec& l = layer("fdeconv" + std::to_string(i));
    add_conv(l, "squeeze", conv(1, fd.fire.in_channels, fd.fire.squeeze_channels));
    const auto ds = fd.deconv_spec();
    const auto fan_in = static_cast<std::size_t>(ds.kernel_w * ds.in_channels / ds.stride_w);
    l.tensors.push_back({l.id + ".deconv.w", ops::deconv_weight_shape(ds), fan_in, false});
    l.tensors.push_back({l.id + ".deconv.b", {static_cast<std::size_t>(ds.out_channels)}, fan_in, true});
    add_conv(l, "expand1", conv(1, fd.fire.squeeze_channels, fd.fire.expand1_channels));
    add_conv(l, "expand3", conv(3, fd.fire.squeeze_channels, fd.fire.expand3_channels));
  }
  add_conv(layer("head"), "conv", g.head());
  return table;
}

}  // namespace pointseg::net
