#pragma once

#include <span>
#include <vector>

#include "pointseg/network/params.hpp"
#include "pointseg/types.hpp"

namespace pointseg::net {

/// Squared-gradient accumulators, one per parameter tensor.
struct AdagradState {
  TensorMap accumulators;

  static AdagradState zeros_like(const ModelParams& params);
};

inline constexpr float kAdagradEpsilon = 1e-7f;

/// acc += g^2; theta -= lr * g / (sqrt(acc) + 1e-7). Throws ShapeError when
/// a gradient or accumulator does not match its parameter.
void adagrad_update(TensorMap& params, const TensorMap& grads, AdagradState& state, float lr);

/// One training example: raw H x W x 5 frame channels and the label map.
struct Example {
  Tensor channels;
  ClassMap labels;
};

struct TrainConfig {
  float learning_rate = 0.001f;
  std::vector<float> class_weights{1.0f, 1.0f, 1.0f, 1.0f};
};

struct StepResult {
  double loss = 0;  // mean over the batch, before the update
  TensorMap gradients;
};

/// Gradient of the batch-mean loss, one tape per example.
StepResult batch_gradients(const ModelParams& params, std::span<const Example> batch, const TrainConfig& cfg);

/// batch_gradients followed by adagrad_update. A non-finite loss or gradient
/// throws NumericalError naming the offending layer; params are untouched.
double train_step(ModelParams& params, std::span<const Example> batch, AdagradState& state, const TrainConfig& cfg);

}  // namespace pointseg::net
