#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pointseg/ops.hpp"
#include "pointseg/tensor.hpp"

namespace pointseg {

/// Handle to a value recorded on a GradTape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class GradTape;

/// Gradients produced by one backward sweep.
class Gradients {
 public:
  /// Gradient of a leaf (constant, variable or parameter); a zero tensor if
  /// the loss does not depend on it. Intermediate gradients are released
  /// during the sweep.
  const Tensor& of(Var v) const;
  /// Gradients of every named parameter, zero-filled when disconnected.
  const std::map<std::string, Tensor>& parameters() const noexcept { return named_; }

 private:
  friend class GradTape;
  std::vector<Tensor> grads_;
  std::map<std::string, Tensor> named_;
};

/// Records operations in execution order so a single reverse sweep can
/// accumulate gradients. Parameters are referenced, not copied: the tensors
/// passed to parameter() must outlive the tape. Single-threaded.
class GradTape {
 public:
  using Value = Var;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Named differentiable leaf. Repeated calls with the same name return the same Var.
  Var parameter(const std::string& name, const Tensor& value);

  const Tensor& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var conv2d(Var x, Var w, Var b, const ops::ConvSpec& spec);
  Var deconv2d(Var x, Var w, Var b, const ops::ConvSpec& spec);
  Var maxpool2d(Var x, ops::Window kernel, ops::Window stride);
  Var global_avg_pool(Var x);
  Var broadcast_spatial(Var x, std::size_t h, std::size_t w);
  Var dense(Var x, Var w, Var b);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var scale_channels(Var feature, Var gate);
  Var concat_channels(std::span<const Var> parts);
  Var softmax_channels(Var x);

  /// Scalar sum of all elements.
  Var sum(Var x);
  /// Scalar sum of x * weights, accumulated in double precision.
  Var weighted_sum(Var x, Tensor weights);
  /// Class-weighted mean negative log-likelihood of per-pixel probabilities.
  Var cross_entropy(Var probabilities, std::span<const std::uint8_t> labels, std::span<const float> class_weights);

  /// Reverse sweep from a scalar loss. Visits every recorded node at most
  /// once, newest first; the recording order is already topological.
  Gradients backward(Var loss) const;

 private:
  using Accumulate = std::function<void(Var, Tensor&&)>;
  using BackwardFn = std::function<void(const GradTape&, Var self, const Tensor& grad_out, const Accumulate&)>;

  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    std::string name;
    BackwardFn backward;
  };

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
};

}  // namespace pointseg
