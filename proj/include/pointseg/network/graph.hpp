#pragma once

// Wiring of the segmentation network. Every channel count derives from the
// conv1 width (`base_channels`, 64 in the full-size graph):
//
//   conv1  3x3 s(1,2)                      W/2   c
//   fire1-3 -> SR1 -> maxpool 3x3 s(1,2)   W/2   2c   (skip s1)
//   fire4-6 -> SR2 -> maxpool 3x3 s(1,2)   W/4   4c   (skip s2)
//   fire7-9 -> SR3 -> EL                   W/8   8c, EL out 5c/2
//   fdeconv1(concat(EL, SR3))  x2 -> W/4 + s2
//   fdeconv2                   x2 -> W/2 + s1
//   fdeconv3                   x1 -> W/2 + conv1
//   fdeconv4                   x2 -> W
//   head 3x3 -> softmax

#include <array>
#include <string>
#include <vector>

#include "pointseg/ops.hpp"

namespace pointseg::net {

struct FireConfig {
  int in_channels = 0;
  int squeeze_channels = 0;
  int expand1_channels = 0;
  int expand3_channels = 0;

  int out_channels() const { return expand1_channels + expand3_channels; }
  void validate() const;
};

/// Fire module whose middle stage is a width-upsampling transposed conv.
struct FireDeconvConfig {
  FireConfig fire;
  int stride_w = 2;
  int kernel_w = 4;

  ops::ConvSpec deconv_spec() const;
};

struct SqueezeReweightConfig {
  int channels = 0;
  int reduction = 16;

  int hidden() const { return channels / reduction > 0 ? channels / reduction : 1; }
};

struct EnlargementConfig {
  int in_channels = 0;
  int branch_channels = 0;
  std::array<int, 3> rates{6, 9, 12};
  int height = 64;  // expected input extent
  int width = 64;

  int concat_channels() const { return 5 * branch_channels; }
  int out_channels() const { return concat_channels() / 4; }
};

struct GraphConfig {
  int height = 64;
  int width = 512;
  int in_channels = 5;
  int num_classes = 4;
  int base_channels = 64;
  std::array<int, 3> el_rates{6, 9, 12};
  int sr_reduction = 16;
  // Per-channel input normalization (x, y, z, intensity, range).
  std::array<float, 5> input_mean{10.88f, 0.23f, -1.04f, 0.21f, 12.12f};
  std::array<float, 5> input_std{11.47f, 6.91f, 0.86f, 0.16f, 12.32f};

  /// The full-size 64 x 512 graph.
  static GraphConfig pointseg() { return {}; }
  /// Same wiring with fewer channels and/or a smaller frame.
  static GraphConfig reduced(int base_channels, int height, int width, std::array<int, 3> rates);

  void validate() const;

  ops::ConvSpec conv1() const;
  FireConfig fire(int index) const;  // 1..9
  SqueezeReweightConfig squeeze_reweight(int index) const;  // 1..3
  EnlargementConfig enlargement() const;
  FireDeconvConfig fire_deconv(int index) const;  // 1..4
  ops::ConvSpec head() const;
  ops::Window pool_kernel() const { return {3, 3}; }
  ops::Window pool_stride() const { return {1, 2}; }
  /// Encoder widths: input, after conv1, after pool1, after pool2.
  std::array<int, 4> encoder_widths() const;

  friend bool operator==(const GraphConfig&, const GraphConfig&) = default;
};

/// One named parameter tensor with its expected shape and fan-in.
struct TensorSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
  bool is_bias;
};

struct LayerSpec {
  std::string id;  // conv1, fire1..fire9, sr1..sr3, el, fdeconv1..fdeconv4, head
  std::vector<TensorSpec> tensors;
};

/// Every parameterized layer in forward order.
std::vector<LayerSpec> layer_table(const GraphConfig& graph);

}  // namespace pointseg::net
