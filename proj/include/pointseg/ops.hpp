#pragma once

// Forward kernels and their gradients. Every function is pure: inputs are
// read-only and a fresh tensor is returned.

#include <cstdint>
#include <span>
#include <vector>

#include "pointseg/tensor.hpp"

namespace pointseg::ops {

/// Thread count used inside the matrix kernels; values < 1 are ignored.
void set_num_threads(int threads);

enum class Padding { Same, Valid };

struct ConvSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int dilation_h = 1;
  int dilation_w = 1;
  Padding padding = Padding::Same;
  int in_channels = 1;
  int out_channels = 1;

  static ConvSpec square(int kernel, int in, int out) {
    ConvSpec s;
    s.kernel_h = s.kernel_w = kernel;
    s.in_channels = in;
    s.out_channels = out;
    return s;
  }
  ConvSpec& stride(int h, int w) {
    stride_h = h;
    stride_w = w;
    return *this;
  }
  ConvSpec& dilation(int h, int w) {
    dilation_h = h;
    dilation_w = w;
    return *this;
  }

  Shape weight_shape() const;
  void validate() const;
};

/// Resolved spatial geometry of a (forward) convolution.
struct ConvGeometry {
  int in_h, in_w;
  int out_h, out_w;
  int pad_top, pad_left;
};

/// SAME follows the usual ceil(in / stride) rule with the extra padding
/// placed after the input (bottom/right) when the total is odd.
ConvGeometry conv_geometry(const ConvSpec& spec, int in_h, int in_w);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          const Tensor& grad_output);

/// Transposed convolution. `weights` are those of the conv2d being
/// transposed, shaped (kh, kw, out_channels, in_channels), so that
/// <deconv2d(x), y> == <x, conv2d(y)> for shared weights. With SAME padding
/// the output is stride times larger than the input along each axis.
/// Only stride_h == 1 and stride_w in {1, 2} are supported.
Tensor deconv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec);
ConvGrads deconv2d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                            const Tensor& grad_output);
Shape deconv_weight_shape(const ConvSpec& spec);

struct Window {
  int h = 1;
  int w = 1;
};

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // linear input index per output element
};

/// Max pooling with SAME geometry. Padded positions never win; ties go to
/// the lowest linear input index.
PoolResult maxpool2d(const Tensor& input, Window kernel, Window stride);
Tensor maxpool2d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                          const Tensor& grad_output);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output);

/// Copies a 1x1xC tensor to every position of an HxWxC map.
Tensor broadcast_spatial(const Tensor& vec, std::size_t h, std::size_t w);
Tensor broadcast_spatial_backward(const Tensor& grad_output);

/// Affine map of a 1x1xC input with weights (C, K) and bias (K).
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
ConvGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output);

Tensor relu(Tensor x);
Tensor relu_backward(const Tensor& output, const Tensor& grad_output);
Tensor sigmoid(Tensor x);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& acc, const Tensor& x);

/// Multiplies channel n at every spatial position by gate[n].
Tensor scale_channels(const Tensor& feature, const Tensor& gate);
struct ScaleGrads {
  Tensor feature;
  Tensor gate;
};
ScaleGrads scale_channels_backward(const Tensor& feature, const Tensor& gate, const Tensor& grad_output);

Tensor concat_channels(std::span<const Tensor* const> parts);
std::vector<Tensor> split_channels(const Tensor& grad_output, std::span<const std::size_t> channel_counts);

/// Per-pixel softmax over channels with max subtraction. Requires C >= 2.
Tensor softmax_channels(const Tensor& logits);
Tensor softmax_channels_backward(const Tensor& output, const Tensor& grad_output);

/// Class-weighted mean over pixels of -w[label] * log(p[label] + eps).
double weighted_nll(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                    std::span<const float> class_weights, float eps = 1e-8f);
Tensor weighted_nll_backward(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                             std::span<const float> class_weights, float grad_output, float eps = 1e-8f);

}  // namespace pointseg::ops
