#include "pointseg/network/model.hpp"

#include "pointseg/error.hpp"

namespace pointseg::net {

Tensor normalize_input(const Tensor& channels, const GraphConfig& graph) {
  require_feature_map(channels, "model input");
  const std::size_t c = channels.channels();
  if (c != graph.input_mean.size()) {
    throw ShapeError("model input has " + std::to_string(c) + " channels, expected " +
                     std::to_string(graph.input_mean.size()));
  }
  Tensor out = channels;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t k = i % c;
    d[i] = (d[i] - graph.input_mean[k]) / graph.input_std[k];
  }
  return out;
}

Tensor model_forward(const Tensor& channels, const ModelParams& params, Trace* trace) {
  validate(params);
  Eager ctx;
  return graph_forward(ctx, normalize_input(channels, params.graph), params, trace);
}

Tensor model_forward(const proj::SphericalFrame& frame, const ModelParams& params, Trace* trace) {
  return model_forward(frame.channels, params, trace);
}

ClassMap predict(const Tensor& probabilities) {
  require_feature_map(probabilities, "predict");
  const std::size_t h = probabilities.height(), w = probabilities.width(), c = probabilities.channels();
  ClassMap out(h, w);
  auto p = probabilities.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (p[i * c + k] > p[i * c + best]) best = k;
    }
    out.ids[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

ClassMap predict(const proj::SphericalFrame& frame, const ModelParams& params) {
  return predict(model_forward(frame, params));
}

ClassMap mask_unoccupied(ClassMap map, const proj::SphericalFrame& frame) {
  if (map.ids.size() != frame.occupancy.size()) throw ShapeError("mask_unoccupied: map and frame sizes differ");
  for (std::size_t i = 0; i < map.ids.size(); ++i) {
    if (!frame.occupancy[i]) map.ids[i] = 0;
  }
  return map;
}

double loss(const Tensor& probabilities, const ClassMap& labels, std::span<const float> class_weights) {
  require_feature_map(probabilities, "loss");
  if (labels.height != probabilities.height() || labels.width != probabilities.width()) {
    throw ShapeError("loss: label map is " + std::to_string(labels.height) + "x" + std::to_string(labels.width) +
                     ", probabilities are " + shape_to_string(probabilities.shape()));
  }
  return ops::weighted_nll(probabilities, labels.ids, class_weights);
}

}  // namespace pointseg::net
