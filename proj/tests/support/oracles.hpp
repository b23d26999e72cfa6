#pragma once

// Naive loop references used to check the optimized kernels.

#include <cstdint>
#include <random>

#include "pointseg/ops.hpp"
#include "pointseg/tensor.hpp"

namespace oracle {

using pointseg::Shape;
using pointseg::Tensor;
namespace ops = pointseg::ops;

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f);

/// Zero padding before the input along one axis, and the output extent.
struct AxisPlan {
  int out;
  int pad_before;
};
AxisPlan plan_axis(int in, int kernel, int stride, int dilation, ops::Padding padding);

/// Direct sum over the padded window.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::ConvSpec& s);
/// Scatter-add: every input element spreads x * w over the kernel footprint.
/// Weights are (kh, kw, out, in).
Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::ConvSpec& s);
/// Window max over in-bounds positions, SAME geometry.
Tensor maxpool2d(const Tensor& x, int kh, int kw, int sh, int sw);
Tensor global_avg_pool(const Tensor& x);
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

}  // namespace oracle
