#include "pointseg/tape.hpp"

#include <stdexcept>

#include "pointseg/error.hpp"

namespace pointseg {

const Tensor& Gradients::of(Var v) const {
  const Tensor& g = grads_.at(v.id);
  if (g.empty()) throw std::logic_error("Gradients::of: gradient of an intermediate value is not retained");
  return g;
}

void GradTape::check(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("GradTape: Var does not belong to this tape");
}

const Tensor& GradTape::value(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.owned;
}

Var GradTape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, false, {}, {}});
  return Var{nodes_.size() - 1};
}

Var GradTape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, true, {}, {}});
  return Var{nodes_.size() - 1};
}

Var GradTape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var{it->second};
  nodes_.push_back(Node{Tensor{}, &value, true, name, {}});
  param_ids_.emplace(name, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var GradTape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var v : inputs) {
    check(v);
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), nullptr, needs, {}, needs ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

Var GradTape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var GradTape::conv2d(Var x, Var w, Var b, const ops::ConvSpec& spec) {
  check(x), check(w), check(b);
  return record(ops::conv2d(value(x), value(w), value(b), spec), {x, w, b},
                [x, w, b, spec](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
                  auto grads = ops::conv2d_backward(t.value(x), t.value(w), spec, g);
                  acc(x, std::move(grads.input));
                  acc(w, std::move(grads.weights));
                  acc(b, std::move(grads.bias));
                });
}

Var GradTape::deconv2d(Var x, Var w, Var b, const ops::ConvSpec& spec) {
  check(x), check(w), check(b);
  return record(ops::deconv2d(value(x), value(w), value(b), spec), {x, w, b},
                [x, w, b, spec](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
                  auto grads = ops::deconv2d_backward(t.value(x), t.value(w), spec, g);
                  acc(x, std::move(grads.input));
                  acc(w, std::move(grads.weights));
                  acc(b, std::move(grads.bias));
                });
}

Var GradTape::maxpool2d(Var x, ops::Window kernel, ops::Window stride) {
  check(x);
  auto pooled = ops::maxpool2d(value(x), kernel, stride);
  return record(std::move(pooled.output), {x},
                [x, argmax = std::move(pooled.argmax)](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
                  acc(x, ops::maxpool2d_backward(t.value(x).shape(), argmax, g));
                });
}

Var GradTape::global_avg_pool(Var x) {
  check(x);
  return record(ops::global_avg_pool(value(x)), {x}, [x](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
    acc(x, ops::global_avg_pool_backward(t.value(x).shape(), g));
  });
}

Var GradTape::broadcast_spatial(Var x, std::size_t h, std::size_t w) {
  check(x);
  return record(ops::broadcast_spatial(value(x), h, w), {x}, [x](const GradTape&, Var, const Tensor& g, const Accumulate& acc) {
    acc(x, ops::broadcast_spatial_backward(g));
  });
}

Var GradTape::dense(Var x, Var w, Var b) {
  check(x), check(w), check(b);
  return record(ops::dense(value(x), value(w), value(b)), {x, w, b},
                [x, w, b](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
                  auto grads = ops::dense_backward(t.value(x), t.value(w), g);
                  acc(x, std::move(grads.input));
                  acc(w, std::move(grads.weights));
                  acc(b, std::move(grads.bias));
                });
}

Var GradTape::relu(Var x) {
  check(x);
  return record(ops::relu(value(x)), {x}, [x](const GradTape& t, Var self, const Tensor& g, const Accumulate& acc) {
    acc(x, ops::relu_backward(t.value(self), g));
  });
}

Var GradTape::sigmoid(Var x) {
  check(x);
  return record(ops::sigmoid(value(x)), {x}, [x](const GradTape& t, Var self, const Tensor& g, const Accumulate& acc) {
    acc(x, ops::sigmoid_backward(t.value(self), g));
  });
}

Var GradTape::add(Var a, Var b) {
  check(a), check(b);
  return record(ops::add(value(a), value(b)), {a, b}, [a, b](const GradTape&, Var, const Tensor& g, const Accumulate& acc) {
    acc(a, Tensor(g));
    acc(b, Tensor(g));
  });
}

Var GradTape::scale_channels(Var feature, Var gate) {
  check(feature), check(gate);
  return record(ops::scale_channels(value(feature), value(gate)), {feature, gate},
                [feature, gate](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
                  auto grads = ops::scale_channels_backward(t.value(feature), t.value(gate), g);
                  acc(feature, std::move(grads.feature));
                  acc(gate, std::move(grads.gate));
                });
}

Var GradTape::concat_channels(std::span<const Var> parts) {
  std::vector<const Tensor*> values;
  std::vector<std::size_t> counts;
  for (Var v : parts) {
    check(v);
    values.push_back(&value(v));
  }
  Tensor out = ops::concat_channels(values);
  for (const Tensor* t : values) counts.push_back(t->channels());
  std::vector<Var> inputs(parts.begin(), parts.end());
  return record(std::move(out), parts, [inputs, counts](const GradTape&, Var, const Tensor& g, const Accumulate& acc) {
    auto pieces = ops::split_channels(g, counts);
    for (std::size_t i = 0; i < inputs.size(); ++i) acc(inputs[i], std::move(pieces[i]));
  });
}

Var GradTape::softmax_channels(Var x) {
  check(x);
  return record(ops::softmax_channels(value(x)), {x}, [x](const GradTape& t, Var self, const Tensor& g, const Accumulate& acc) {
    acc(x, ops::softmax_channels_backward(t.value(self), g));
  });
}

Var GradTape::sum(Var x) {
  check(x);
  double s = 0.0;
  for (float v : value(x).data()) s += v;
  return record(Tensor::scalar(static_cast<float>(s)), {x}, [x](const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
    acc(x, Tensor(t.value(x).shape(), g[0]));
  });
}

Var GradTape::weighted_sum(Var x, Tensor weights) {
  check(x);
  const Tensor& xv = value(x);
  if (!xv.same_shape(weights)) {
    throw ShapeError("weighted_sum: weights " + shape_to_string(weights.shape()) + " vs input " +
                     shape_to_string(xv.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += static_cast<double>(xv[i]) * weights[i];
  return record(Tensor::scalar(static_cast<float>(s)), {x},
                [x, weights = std::move(weights)](const GradTape&, Var, const Tensor& g, const Accumulate& acc) {
                  Tensor gx = weights;
                  for (float& v : gx.data()) v *= g[0];
                  acc(x, std::move(gx));
                });
}

Var GradTape::cross_entropy(Var probabilities, std::span<const std::uint8_t> labels,
                            std::span<const float> class_weights) {
  check(probabilities);
  const double loss = ops::weighted_nll(value(probabilities), labels, class_weights);
  return record(Tensor::scalar(static_cast<float>(loss)), {probabilities},
                [probabilities, labels = std::vector<std::uint8_t>(labels.begin(), labels.end()),
                 weights = std::vector<float>(class_weights.begin(), class_weights.end())](
                    const GradTape& t, Var, const Tensor& g, const Accumulate& acc) {
                  acc(probabilities, ops::weighted_nll_backward(t.value(probabilities), labels, weights, g[0]));
                });
}

Gradients GradTape::backward(Var loss) const {
  check(loss);
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_to_string(value(loss).shape()));
  }
  Gradients out;
  out.grads_.resize(nodes_.size());
  out.grads_[loss.id] = Tensor(value(loss).shape(), 1.0f);

  const Accumulate acc = [&](Var v, Tensor&& g) {
    if (!nodes_[v.id].requires_grad) return;
    Tensor& slot = out.grads_[v.id];
    if (slot.empty()) {
      slot = std::move(g);
    } else {
      ops::add_inplace(slot, g);
    }
  };

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.backward || out.grads_[i].empty()) continue;
    n.backward(*this, Var{i}, out.grads_[i], acc);
    out.grads_[i] = Tensor{};
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const bool leaf = !nodes_[i].backward;
    if (leaf && out.grads_[i].empty()) out.grads_[i] = Tensor(value(Var{i}).shape());
  }
  for (const auto& [name, id] : param_ids_) out.named_.emplace(name, out.grads_[id]);
  return out;
}

}  // namespace pointseg
