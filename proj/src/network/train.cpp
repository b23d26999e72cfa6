#include "pointseg/network/train.hpp"

#include <cmath>

#include "pointseg/error.hpp"
#include "pointseg/network/layers.hpp"
#include "pointseg/network/model.hpp"
#include "pointseg/tape.hpp"

namespace pointseg::net {

namespace {

bool all_finite(const Tensor& t) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string layer_of(const std::string& name) { return name.substr(0, name.find('.')); }

// First layer whose parameters or forward output contain a non-finite value.
std::string locate_non_finite(const ModelParams& params, const Example& example) {
  for (const auto& [name, t] : params.tensors) {
    if (!all_finite(t)) return layer_of(name) + " (parameter " + name + ")";
  }
  Trace trace;
  model_forward(example.channels, params, &trace);
  for (const auto& e : trace) {
    if (!e.finite) return e.stage;
  }
  return "loss";
}

}  // namespace

AdagradState AdagradState::zeros_like(const ModelParams& params) {
  AdagradState s;
  for (const auto& [name, t] : params.tensors) s.accumulators.emplace(name, Tensor(t.shape()));
  return s;
}

void adagrad_update(TensorMap& params, const TensorMap& grads, AdagradState& state, float lr) {
  for (auto& [name, theta] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    auto [acc, inserted] = state.accumulators.try_emplace(name, Tensor(theta.shape()));
    if (!theta.same_shape(g->second) || !theta.same_shape(acc->second)) {
      throw ShapeError("adagrad: shape mismatch for " + name);
    }
    auto p = theta.data();
    auto gd = g->second.data();
    auto a = acc->second.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      a[i] += gd[i] * gd[i];
      p[i] -= lr * gd[i] / (std::sqrt(a[i]) + kAdagradEpsilon);
    }
  }
}

StepResult batch_gradients(const ModelParams& params, std::span<const Example> batch, const TrainConfig& cfg) {
  if (batch.empty()) throw ShapeError("train_step: empty batch");
  validate(params);
  StepResult out;
  const float inv = 1.0f / static_cast<float>(batch.size());
  for (const Example& ex : batch) {
    GradTape tape;
    Var x = tape.constant(normalize_input(ex.channels, params.graph));
    Var probs = graph_forward(tape, x, params);
    const Tensor& p = tape.value(probs);
    if (ex.labels.height != p.height() || ex.labels.width != p.width()) {
      throw ShapeError("train_step: label map does not match the frame");
    }
    Var l = tape.cross_entropy(probs, ex.labels.ids, cfg.class_weights);
    const double value = tape.value(l)[0];
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite loss; first offending layer: " + locate_non_finite(params, ex));
    }
    out.loss += value / static_cast<double>(batch.size());
    Gradients grads = tape.backward(l);
    for (const auto& [name, g] : grads.parameters()) {
      if (!all_finite(g)) throw NumericalError("non-finite gradient in layer " + layer_of(name) + " (" + name + ")");
      auto [slot, inserted] = out.gradients.try_emplace(name, g.shape());
      auto s = slot->second.data();
      auto gd = g.data();
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += gd[i] * inv;
    }
  }
  return out;
}

double train_step(ModelParams& params, std::span<const Example> batch, AdagradState& state, const TrainConfig& cfg) {
  StepResult r = batch_gradients(params, batch, cfg);
  adagrad_update(params.tensors, r.gradients, state, cfg.learning_rate);
  return r.loss;
}

}  // namespace pointseg::net
