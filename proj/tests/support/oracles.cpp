#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

AxisPlan plan_axis(int in, int kernel, int stride, int dilation, ops::Padding padding) {
  const int span = dilation * (kernel - 1) + 1;
  if (padding == ops::Padding::Valid) return {(in - span) / stride + 1, 0};
  const int out = (in + stride - 1) / stride;
  const int needed = (out - 1) * stride + span - in;
  return {out, std::max(needed, 0) / 2};
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::ConvSpec& s) {
  const int H = static_cast<int>(x.height()), W = static_cast<int>(x.width());
  const auto ph = plan_axis(H, s.kernel_h, s.stride_h, s.dilation_h, s.padding);
  const auto pw = plan_axis(W, s.kernel_w, s.stride_w, s.dilation_w, s.padding);
  Tensor y = Tensor::feature_map(ph.out, pw.out, s.out_channels);
  for (int oh = 0; oh < ph.out; ++oh)
    for (int ow = 0; ow < pw.out; ++ow)
      for (int co = 0; co < s.out_channels; ++co) {
        double acc = b[co];
        for (int kh = 0; kh < s.kernel_h; ++kh)
          for (int kw = 0; kw < s.kernel_w; ++kw) {
            const int ih = oh * s.stride_h + kh * s.dilation_h - ph.pad_before;
            const int iw = ow * s.stride_w + kw * s.dilation_w - pw.pad_before;
            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
            for (int ci = 0; ci < s.in_channels; ++ci) {
              acc += double(x.at(ih, iw, ci)) *
                     w[((std::size_t(kh) * s.kernel_w + kw) * s.in_channels + ci) * s.out_channels + co];
            }
          }
        y[(std::size_t(oh) * pw.out + ow) * s.out_channels + co] = static_cast<float>(acc);
      }
  return y;
}

Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::ConvSpec& s) {
  const int H = static_cast<int>(x.height()), W = static_cast<int>(x.width());
  int OH, OW;
  if (s.padding == ops::Padding::Same) {
    OH = H * s.stride_h;
    OW = W * s.stride_w;
  } else {
    OH = (H - 1) * s.stride_h + s.dilation_h * (s.kernel_h - 1) + 1;
    OW = (W - 1) * s.stride_w + s.dilation_w * (s.kernel_w - 1) + 1;
  }
  // The padding of the conv that maps the output grid back onto the input.
  const int pad_h = plan_axis(OH, s.kernel_h, s.stride_h, s.dilation_h, s.padding).pad_before;
  const int pad_w = plan_axis(OW, s.kernel_w, s.stride_w, s.dilation_w, s.padding).pad_before;
  std::vector<double> acc(std::size_t(OH) * OW * s.out_channels, 0.0);
  for (int ih = 0; ih < H; ++ih)
    for (int iw = 0; iw < W; ++iw)
      for (int ci = 0; ci < s.in_channels; ++ci) {
        const double v = x.at(ih, iw, ci);
        for (int kh = 0; kh < s.kernel_h; ++kh)
          for (int kw = 0; kw < s.kernel_w; ++kw) {
            const int oh = ih * s.stride_h + kh * s.dilation_h - pad_h;
            const int ow = iw * s.stride_w + kw * s.dilation_w - pad_w;
            if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
            for (int co = 0; co < s.out_channels; ++co) {
              acc[(std::size_t(oh) * OW + ow) * s.out_channels + co] +=
                  v * w[((std::size_t(kh) * s.kernel_w + kw) * s.out_channels + co) * s.in_channels + ci];
            }
          }
      }
  Tensor y = Tensor::feature_map(OH, OW, s.out_channels);
  for (std::size_t i = 0; i < acc.size(); ++i) y[i] = static_cast<float>(acc[i] + b[i % s.out_channels]);
  return y;
}

Tensor maxpool2d(const Tensor& x, int kh, int kw, int sh, int sw) {
  const int H = static_cast<int>(x.height()), W = static_cast<int>(x.width()), C = static_cast<int>(x.channels());
  const auto ph = plan_axis(H, kh, sh, 1, ops::Padding::Same);
  const auto pw = plan_axis(W, kw, sw, 1, ops::Padding::Same);
  Tensor y = Tensor::feature_map(ph.out, pw.out, C);
  for (int oh = 0; oh < ph.out; ++oh)
    for (int ow = 0; ow < pw.out; ++ow)
      for (int c = 0; c < C; ++c) {
        float best = -std::numeric_limits<float>::infinity();
        for (int i = 0; i < kh; ++i)
          for (int j = 0; j < kw; ++j) {
            const int ih = oh * sh + i - ph.pad_before, iw = ow * sw + j - pw.pad_before;
            if (ih >= 0 && ih < H && iw >= 0 && iw < W) best = std::max(best, x.at(ih, iw, c));
          }
        y[(std::size_t(oh) * pw.out + ow) * C + c] = best;
      }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  const std::size_t H = x.height(), W = x.width(), C = x.channels();
  Tensor y = Tensor::feature_map(1, 1, C);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) sum += x.at(h, w, c);
    y[c] = static_cast<float>(sum / double(H * W));
  }
  return y;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t C = w.dim(0), K = w.dim(1);
  Tensor y = Tensor::feature_map(1, 1, K);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = b[k];
    for (std::size_t c = 0; c < C; ++c) acc += double(x[c]) * w[c * K + k];
    y[k] = static_cast<float>(acc);
  }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

}  // namespace oracle
