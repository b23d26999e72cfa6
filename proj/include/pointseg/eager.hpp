#pragma once

#include <string>

#include "pointseg/ops.hpp"
#include "pointseg/tape.hpp"

namespace pointseg {

/// Immediate-mode counterpart of GradTape: the same operation surface, but
/// values are plain tensors and nothing is recorded. Layer code is written
/// once against either context.
struct Eager {
  using Value = Tensor;

  const Tensor& parameter(const std::string&, const Tensor& value) const { return value; }
  const Tensor& value(const Tensor& t) const { return t; }

  Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::ConvSpec& s) const {
    return ops::conv2d(x, w, b, s);
  }
  Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ops::ConvSpec& s) const {
    return ops::deconv2d(x, w, b, s);
  }
  Tensor maxpool2d(const Tensor& x, ops::Window kernel, ops::Window stride) const {
    return ops::maxpool2d(x, kernel, stride).output;
  }
  Tensor global_avg_pool(const Tensor& x) const { return ops::global_avg_pool(x); }
  Tensor broadcast_spatial(const Tensor& x, std::size_t h, std::size_t w) const {
    return ops::broadcast_spatial(x, h, w);
  }
  Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) const { return ops::dense(x, w, b); }
  Tensor relu(Tensor x) const { return ops::relu(std::move(x)); }
  Tensor sigmoid(Tensor x) const { return ops::sigmoid(std::move(x)); }
  Tensor add(Tensor a, const Tensor& b) const {
    ops::add_inplace(a, b);
    return a;
  }
  Tensor scale_channels(const Tensor& feature, const Tensor& gate) const { return ops::scale_channels(feature, gate); }
  Tensor softmax_channels(const Tensor& x) const { return ops::softmax_channels(x); }

  template <class... T>
  Tensor concat(const T&... parts) const {
    const Tensor* ptrs[] = {&parts...};
    return ops::concat_channels(ptrs);
  }
};

template <class... V>
Var concat(GradTape& tape, V... parts) {
  const Var vars[] = {parts...};
  return tape.concat_channels(vars);
}

template <class... T>
Tensor concat(const Eager& ctx, const T&... parts) {
  return ctx.concat(parts...);
}

}  // namespace pointseg
