#include "pointseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "pointseg/error.hpp"

namespace pointseg::ops {

namespace {

std::string dims(const Shape& s) { return shape_to_string(s); }

void require_bias(const Tensor& bias, int count, const char* op) {
  if (bias.rank() != 1 || bias.dim(0) != static_cast<std::size_t>(count)) {
    throw ShapeError(std::string(op) + ": bias shape " + dims(bias.shape()) + " does not match out_channels " +
                     std::to_string(count));
  }
}

int same_pad_total(int in, int out, int stride, int effective_kernel) {
  return std::max((out - 1) * stride + effective_kernel - in, 0);
}

// Gathers receptive fields into rows of length kh*kw*C, one row per output position.
void im2col(const float* x, int channels, const ConvGeometry& g, const ConvSpec& s, float* cols) {
  const std::size_t c = static_cast<std::size_t>(channels);
  const std::size_t row_len = static_cast<std::size_t>(s.kernel_h * s.kernel_w) * c;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      float* row = cols + (static_cast<std::size_t>(oy) * g.out_w + ox) * row_len;
      for (int ky = 0; ky < s.kernel_h; ++ky) {
        const int iy = oy * s.stride_h + ky * s.dilation_h - g.pad_top;
        for (int kx = 0; kx < s.kernel_w; ++kx) {
          const int ix = ox * s.stride_w + kx * s.dilation_w - g.pad_left;
          float* dst = row + static_cast<std::size_t>(ky * s.kernel_w + kx) * c;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::fill(dst, dst + c, 0.0f);
          } else {
            std::memcpy(dst, x + (static_cast<std::size_t>(iy) * g.in_w + ix) * c, c * sizeof(float));
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters rows back onto the (zeroed) image, summing overlaps.
void col2im(const float* cols, int channels, const ConvGeometry& g, const ConvSpec& s, float* x) {
  const std::size_t c = static_cast<std::size_t>(channels);
  const std::size_t row_len = static_cast<std::size_t>(s.kernel_h * s.kernel_w) * c;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const float* row = cols + (static_cast<std::size_t>(oy) * g.out_w + ox) * row_len;
      for (int ky = 0; ky < s.kernel_h; ++ky) {
        const int iy = oy * s.stride_h + ky * s.dilation_h - g.pad_top;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < s.kernel_w; ++kx) {
          const int ix = ox * s.stride_w + kx * s.dilation_w - g.pad_left;
          if (ix < 0 || ix >= g.in_w) continue;
          const float* src = row + static_cast<std::size_t>(ky * s.kernel_w + kx) * c;
          float* dst = x + (static_cast<std::size_t>(iy) * g.in_w + ix) * c;
          for (std::size_t i = 0; i < c; ++i) dst[i] += src[i];
        }
      }
    }
  }
}

bool is_pointwise(const ConvSpec& s, const ConvGeometry& g) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride_h == 1 && s.stride_w == 1 && g.pad_top == 0 &&
         g.pad_left == 0;
}

void fill_rows_with_bias(float* out, std::size_t rows, const Tensor& bias) {
  const std::size_t n = bias.size();
  for (std::size_t r = 0; r < rows; ++r) std::memcpy(out + r * n, bias.data().data(), n * sizeof(float));
}

Tensor bias_grad(const Tensor& grad_output) {
  const std::size_t c = grad_output.dim(2);
  const std::size_t rows = grad_output.size() / c;
  std::vector<double> acc(c, 0.0);
  const float* g = grad_output.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < c; ++i) acc[i] += g[r * c + i];
  Tensor out({c});
  for (std::size_t i = 0; i < c; ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

void require_weights(const Tensor& w, const Shape& expected, const char* op) {
  if (w.shape() != expected) {
    static const char* names[] = {"kernel_h", "kernel_w", "in_channels", "out_channels"};
    std::string which = "rank";
    if (w.rank() == expected.size()) {
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (w.dim(i) != expected[i]) {
          which = names[i];
          break;
        }
      }
    }
    throw ShapeError(std::string(op) + ": weight shape " + dims(w.shape()) + " mismatches " + dims(expected) +
                     " in " + which);
  }
}

void require_input_channels(const Tensor& input, int expected, const char* op) {
  require_feature_map(input, op);
  if (input.channels() != static_cast<std::size_t>(expected)) {
    throw ShapeError(std::string(op) + ": input channels " + std::to_string(input.channels()) +
                     " != in_channels " + std::to_string(expected));
  }
}

// Spatial extent of the conv2d whose transpose maps (in_h, in_w) to it.
std::pair<int, int> deconv_output_extent(const ConvSpec& s, int in_h, int in_w) {
  if (s.padding == Padding::Same) return {in_h * s.stride_h, in_w * s.stride_w};
  const int eff_h = (s.kernel_h - 1) * s.dilation_h + 1;
  const int eff_w = (s.kernel_w - 1) * s.dilation_w + 1;
  return {(in_h - 1) * s.stride_h + eff_h, (in_w - 1) * s.stride_w + eff_w};
}

void validate_deconv(const ConvSpec& s) {
  s.validate();
  if (s.stride_h != 1 || (s.stride_w != 1 && s.stride_w != 2)) {
    throw ShapeError("deconv2d: unsupported stride (" + std::to_string(s.stride_h) + ", " +
                     std::to_string(s.stride_w) + "); only (1, 1) and (1, 2) are supported");
  }
}

}  // namespace

void set_num_threads(int threads) { detail::set_gemm_threads(threads); }

Shape ConvSpec::weight_shape() const {
  return {static_cast<std::size_t>(kernel_h), static_cast<std::size_t>(kernel_w),
          static_cast<std::size_t>(in_channels), static_cast<std::size_t>(out_channels)};
}

void ConvSpec::validate() const {
  if (kernel_h < 1 || kernel_w < 1) throw ShapeError("conv spec: kernel extents must be >= 1");
  if (stride_h < 1 || stride_w < 1) throw ShapeError("conv spec: strides must be >= 1");
  if (dilation_h < 1 || dilation_w < 1) throw ShapeError("conv spec: dilations must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw ShapeError("conv spec: channel counts must be >= 1");
}

ConvGeometry conv_geometry(const ConvSpec& s, int in_h, int in_w) {
  ConvGeometry g{in_h, in_w, 0, 0, 0, 0};
  const int eff_h = (s.kernel_h - 1) * s.dilation_h + 1;
  const int eff_w = (s.kernel_w - 1) * s.dilation_w + 1;
  if (s.padding == Padding::Same) {
    g.out_h = (in_h + s.stride_h - 1) / s.stride_h;
    g.out_w = (in_w + s.stride_w - 1) / s.stride_w;
    g.pad_top = same_pad_total(in_h, g.out_h, s.stride_h, eff_h) / 2;
    g.pad_left = same_pad_total(in_w, g.out_w, s.stride_w, eff_w) / 2;
  } else {
    if (in_h < eff_h) throw ShapeError("conv: kernel_h exceeds input height under VALID padding");
    if (in_w < eff_w) throw ShapeError("conv: kernel_w exceeds input width under VALID padding");
    g.out_h = (in_h - eff_h) / s.stride_h + 1;
    g.out_w = (in_w - eff_w) / s.stride_w + 1;
  }
  return g;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec) {
  spec.validate();
  require_input_channels(input, spec.in_channels, "conv2d");
  require_weights(weights, spec.weight_shape(), "conv2d");
  require_bias(bias, spec.out_channels, "conv2d");

  const auto g = conv_geometry(spec, static_cast<int>(input.height()), static_cast<int>(input.width()));
  const std::size_t rows = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t k = static_cast<std::size_t>(spec.kernel_h * spec.kernel_w * spec.in_channels);
  Tensor out = Tensor::feature_map(g.out_h, g.out_w, spec.out_channels);
  fill_rows_with_bias(out.data().data(), rows, bias);

  if (is_pointwise(spec, g)) {
    detail::gemm(false, false, rows, spec.out_channels, k, 1.0f, input.data().data(), weights.data().data(),
                 1.0f, out.data().data());
  } else {
    std::vector<float> cols(rows * k);
    im2col(input.data().data(), spec.in_channels, g, spec, cols.data());
    detail::gemm(false, false, rows, spec.out_channels, k, 1.0f, cols.data(), weights.data().data(), 1.0f,
                 out.data().data());
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                          const Tensor& grad_output) {
  const auto g = conv_geometry(spec, static_cast<int>(input.height()), static_cast<int>(input.width()));
  const std::size_t rows = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t k = static_cast<std::size_t>(spec.kernel_h * spec.kernel_w * spec.in_channels);
  const std::size_t n = static_cast<std::size_t>(spec.out_channels);
  const float* gy = grad_output.data().data();

  ConvGrads grads{Tensor(input.shape()), Tensor(weights.shape()), bias_grad(grad_output)};
  if (is_pointwise(spec, g)) {
    detail::gemm(true, false, k, n, rows, 1.0f, input.data().data(), gy, 0.0f, grads.weights.data().data());
    detail::gemm(false, true, rows, k, n, 1.0f, gy, weights.data().data(), 0.0f, grads.input.data().data());
  } else {
    std::vector<float> cols(rows * k);
    im2col(input.data().data(), spec.in_channels, g, spec, cols.data());
    detail::gemm(true, false, k, n, rows, 1.0f, cols.data(), gy, 0.0f, grads.weights.data().data());
    detail::gemm(false, true, rows, k, n, 1.0f, gy, weights.data().data(), 0.0f, cols.data());
    col2im(cols.data(), spec.in_channels, g, spec, grads.input.data().data());
  }
  return grads;
}

Shape deconv_weight_shape(const ConvSpec& spec) {
  return {static_cast<std::size_t>(spec.kernel_h), static_cast<std::size_t>(spec.kernel_w),
          static_cast<std::size_t>(spec.out_channels), static_cast<std::size_t>(spec.in_channels)};
}

Tensor deconv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvSpec& spec) {
  validate_deconv(spec);
  require_input_channels(input, spec.in_channels, "deconv2d");
  require_weights(weights, deconv_weight_shape(spec), "deconv2d");
  require_bias(bias, spec.out_channels, "deconv2d");

  const int in_h = static_cast<int>(input.height());
  const int in_w = static_cast<int>(input.width());
  const auto [out_h, out_w] = deconv_output_extent(spec, in_h, in_w);
  // The geometry of the forward conv that maps our output back to our input.
  const auto g = conv_geometry(spec, out_h, out_w);
  const std::size_t rows = static_cast<std::size_t>(in_h) * in_w;
  const std::size_t k = static_cast<std::size_t>(spec.kernel_h * spec.kernel_w * spec.out_channels);

  std::vector<float> cols(rows * k);
  detail::gemm(false, true, rows, k, spec.in_channels, 1.0f, input.data().data(), weights.data().data(), 0.0f,
               cols.data());
  Tensor out = Tensor::feature_map(out_h, out_w, spec.out_channels);
  col2im(cols.data(), spec.out_channels, g, spec, out.data().data());
  const std::size_t c = spec.out_channels;
  float* o = out.data().data();
  for (std::size_t p = 0; p < out.size() / c; ++p)
    for (std::size_t i = 0; i < c; ++i) o[p * c + i] += bias[i];
  return out;
}

ConvGrads deconv2d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                            const Tensor& grad_output) {
  const int in_h = static_cast<int>(input.height());
  const int in_w = static_cast<int>(input.width());
  const auto g = conv_geometry(spec, static_cast<int>(grad_output.height()), static_cast<int>(grad_output.width()));
  const std::size_t rows = static_cast<std::size_t>(in_h) * in_w;
  const std::size_t k = static_cast<std::size_t>(spec.kernel_h * spec.kernel_w * spec.out_channels);

  std::vector<float> cols(rows * k);
  im2col(grad_output.data().data(), spec.out_channels, g, spec, cols.data());
  ConvGrads grads{Tensor(input.shape()), Tensor(weights.shape()), bias_grad(grad_output)};
  detail::gemm(false, false, rows, spec.in_channels, k, 1.0f, cols.data(), weights.data().data(), 0.0f,
               grads.input.data().data());
  detail::gemm(true, false, k, spec.in_channels, rows, 1.0f, cols.data(), input.data().data(), 0.0f,
               grads.weights.data().data());
  return grads;
}

PoolResult maxpool2d(const Tensor& input, Window kernel, Window stride) {
  require_feature_map(input, "maxpool2d");
  if (kernel.h < 1 || kernel.w < 1 || stride.h < 1 || stride.w < 1) {
    throw ShapeError("maxpool2d: kernel and stride extents must be >= 1");
  }
  ConvSpec s;
  s.kernel_h = kernel.h;
  s.kernel_w = kernel.w;
  s.stride_h = stride.h;
  s.stride_w = stride.w;
  const int h = static_cast<int>(input.height());
  const int w = static_cast<int>(input.width());
  const auto g = conv_geometry(s, h, w);
  const std::size_t c = input.channels();
  PoolResult r{Tensor::feature_map(g.out_h, g.out_w, c), {}};
  r.argmax.resize(r.output.size());
  const float* x = input.data().data();
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const std::size_t obase = (static_cast<std::size_t>(oy) * g.out_w + ox) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        float best = -std::numeric_limits<float>::infinity();
        std::uint32_t best_idx = 0;
        bool found = false;
        // Row-major window scan visits linear indices in increasing order,
        // so strict '>' keeps the lowest index on ties.
        for (int ky = 0; ky < kernel.h; ++ky) {
          const int iy = oy * stride.h + ky - g.pad_top;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel.w; ++kx) {
            const int ix = ox * stride.w + kx - g.pad_left;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = (static_cast<std::size_t>(iy) * w + ix) * c + ch;
            if (!found || x[idx] > best || (std::isnan(x[idx]) && !std::isnan(best))) {
              best = x[idx];
              best_idx = static_cast<std::uint32_t>(idx);
              found = true;
            }
          }
        }
        r.output[obase + ch] = best;
        r.argmax[obase + ch] = best_idx;
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                          const Tensor& grad_output) {
  Tensor gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_output[i];
  return gx;
}

Tensor global_avg_pool(const Tensor& input) {
  require_feature_map(input, "global_avg_pool");
  const std::size_t c = input.channels();
  const std::size_t n = input.height() * input.width();
  std::vector<double> acc(c, 0.0);
  const float* x = input.data().data();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < c; ++i) acc[i] += x[p * c + i];
  Tensor out = Tensor::feature_map(1, 1, c);
  for (std::size_t i = 0; i < c; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(n));
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output) {
  const std::size_t n = input_shape[0] * input_shape[1];
  const float inv = 1.0f / static_cast<float>(n);
  Tensor gx(input_shape);
  const std::size_t c = input_shape[2];
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < c; ++i) gx[p * c + i] = grad_output[i] * inv;
  return gx;
}

Tensor broadcast_spatial(const Tensor& vec, std::size_t h, std::size_t w) {
  require_feature_map(vec, "broadcast_spatial");
  if (vec.height() != 1 || vec.width() != 1) throw ShapeError("broadcast_spatial: expected a 1x1xC input");
  const std::size_t c = vec.channels();
  Tensor out = Tensor::feature_map(h, w, c);
  for (std::size_t p = 0; p < h * w; ++p) std::memcpy(&out[p * c], vec.data().data(), c * sizeof(float));
  return out;
}

Tensor broadcast_spatial_backward(const Tensor& grad_output) {
  const std::size_t c = grad_output.channels();
  const std::size_t n = grad_output.height() * grad_output.width();
  std::vector<double> acc(c, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < c; ++i) acc[i] += grad_output[p * c + i];
  Tensor out = Tensor::feature_map(1, 1, c);
  for (std::size_t i = 0; i < c; ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::size_t c = input.size();
  if (weights.rank() != 2 || weights.dim(0) != c) {
    throw ShapeError("dense: weights " + dims(weights.shape()) + " do not take " + std::to_string(c) + " inputs");
  }
  const std::size_t k = weights.dim(1);
  require_bias(bias, static_cast<int>(k), "dense");
  Tensor out = Tensor::feature_map(1, 1, k);
  for (std::size_t j = 0; j < k; ++j) {
    float acc = bias[j];
    for (std::size_t i = 0; i < c; ++i) acc += input[i] * weights[i * k + j];
    out[j] = acc;
  }
  return out;
}

ConvGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output) {
  const std::size_t c = weights.dim(0);
  const std::size_t k = weights.dim(1);
  ConvGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({k})};
  for (std::size_t i = 0; i < c; ++i) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < k; ++j) {
      g.weights[i * k + j] = input[i] * grad_output[j];
      acc += weights[i * k + j] * grad_output[j];
    }
    g.input[i] = acc;
  }
  for (std::size_t j = 0; j < k; ++j) g.bias[j] = grad_output[j];
  return g;
}

Tensor relu(Tensor x) {
  for (float& v : x.data()) v = v < 0.0f ? 0.0f : v;
  return x;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_output) {
  Tensor g(output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > 0.0f ? grad_output[i] : 0.0f;
  return g;
}

Tensor sigmoid(Tensor x) {
  for (float& v : x.data()) v = 1.0f / (1.0f + std::exp(-v));
  return x;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output) {
  Tensor g(output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_output[i] * output[i] * (1.0f - output[i]);
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& acc, const Tensor& x) {
  if (!acc.same_shape(x)) {
    throw ShapeError("add: shapes " + dims(acc.shape()) + " and " + dims(x.shape()) + " differ");
  }
  float* a = acc.data().data();
  const float* b = x.data().data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

Tensor scale_channels(const Tensor& feature, const Tensor& gate) {
  require_feature_map(feature, "scale_channels");
  const std::size_t c = feature.channels();
  if (gate.size() != c) {
    throw ShapeError("scale_channels: gate has " + std::to_string(gate.size()) + " entries for " +
                     std::to_string(c) + " channels");
  }
  Tensor out = feature;
  float* o = out.data().data();
  for (std::size_t p = 0; p < out.size() / c; ++p)
    for (std::size_t i = 0; i < c; ++i) o[p * c + i] *= gate[i];
  return out;
}

ScaleGrads scale_channels_backward(const Tensor& feature, const Tensor& gate, const Tensor& grad_output) {
  const std::size_t c = feature.channels();
  ScaleGrads g{scale_channels(grad_output, gate), Tensor(gate.shape())};
  std::vector<double> acc(c, 0.0);
  for (std::size_t p = 0; p < feature.size() / c; ++p)
    for (std::size_t i = 0; i < c; ++i) acc[i] += static_cast<double>(feature[p * c + i]) * grad_output[p * c + i];
  for (std::size_t i = 0; i < c; ++i) g.gate[i] = static_cast<float>(acc[i]);
  return g;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = *parts.front();
  require_feature_map(first, "concat_channels");
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    require_feature_map(*p, "concat_channels");
    if (p->height() != first.height() || p->width() != first.width()) {
      throw ShapeError("concat_channels: spatial extents " + dims(p->shape()) + " and " + dims(first.shape()) +
                       " differ");
    }
    total += p->channels();
  }
  Tensor out = Tensor::feature_map(first.height(), first.width(), total);
  const std::size_t pixels = first.height() * first.width();
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    const std::size_t c = p->channels();
    for (std::size_t px = 0; px < pixels; ++px)
      std::memcpy(&out[px * total + offset], &(*p)[px * c], c * sizeof(float));
    offset += c;
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& grad_output, std::span<const std::size_t> channel_counts) {
  const std::size_t total = grad_output.channels();
  const std::size_t pixels = grad_output.height() * grad_output.width();
  std::vector<Tensor> parts;
  std::size_t offset = 0;
  for (std::size_t c : channel_counts) {
    Tensor part = Tensor::feature_map(grad_output.height(), grad_output.width(), c);
    for (std::size_t px = 0; px < pixels; ++px)
      std::memcpy(&part[px * c], &grad_output[px * total + offset], c * sizeof(float));
    offset += c;
    parts.push_back(std::move(part));
  }
  return parts;
}

Tensor softmax_channels(const Tensor& logits) {
  require_feature_map(logits, "softmax_channels");
  const std::size_t c = logits.channels();
  if (c < 2) throw ShapeError("softmax_channels: need at least 2 channels");
  Tensor out(logits.shape());
  for (std::size_t p = 0; p < logits.size() / c; ++p) {
    const float* z = &logits[p * c];
    float* y = &out[p * c];
    const float m = *std::max_element(z, z + c);
    float sum = 0.0f;
    for (std::size_t i = 0; i < c; ++i) {
      y[i] = std::exp(z[i] - m);
      sum += y[i];
    }
    const float inv = 1.0f / sum;
    for (std::size_t i = 0; i < c; ++i) y[i] *= inv;
  }
  return out;
}

Tensor softmax_channels_backward(const Tensor& output, const Tensor& grad_output) {
  const std::size_t c = output.channels();
  Tensor g(output.shape());
  for (std::size_t p = 0; p < output.size() / c; ++p) {
    const float* y = &output[p * c];
    const float* gy = &grad_output[p * c];
    float dot = 0.0f;
    for (std::size_t i = 0; i < c; ++i) dot += y[i] * gy[i];
    for (std::size_t i = 0; i < c; ++i) g[p * c + i] = y[i] * (gy[i] - dot);
  }
  return g;
}

namespace {
void check_nll_inputs(const Tensor& p, std::span<const std::uint8_t> labels, std::span<const float> w) {
  require_feature_map(p, "weighted_nll");
  const std::size_t pixels = p.height() * p.width();
  if (labels.size() != pixels) {
    throw ShapeError("weighted_nll: " + std::to_string(labels.size()) + " labels for " + std::to_string(pixels) +
                     " pixels");
  }
  if (w.size() != p.channels()) throw ShapeError("weighted_nll: class weight count != channel count");
  for (auto l : labels) {
    if (l >= p.channels()) throw ShapeError("weighted_nll: label " + std::to_string(l) + " out of range");
  }
}
}  // namespace

double weighted_nll(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                    std::span<const float> class_weights, float eps) {
  check_nll_inputs(probabilities, labels, class_weights);
  const std::size_t c = probabilities.channels();
  double acc = 0.0;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::uint8_t l = labels[p];
    acc -= class_weights[l] * std::log(static_cast<double>(probabilities[p * c + l]) + eps);
  }
  return acc / static_cast<double>(labels.size());
}

Tensor weighted_nll_backward(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                             std::span<const float> class_weights, float grad_output, float eps) {
  check_nll_inputs(probabilities, labels, class_weights);
  const std::size_t c = probabilities.channels();
  const double scale = grad_output / static_cast<double>(labels.size());
  Tensor g(probabilities.shape());
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::uint8_t l = labels[p];
    g[p * c + l] = static_cast<float>(-scale * class_weights[l] / (static_cast<double>(probabilities[p * c + l]) + eps));
  }
  return g;
}

}  // namespace pointseg::ops
