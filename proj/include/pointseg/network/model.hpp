#pragma once

#include <span>

#include "pointseg/network/layers.hpp"
#include "pointseg/projection.hpp"
#include "pointseg/types.hpp"

namespace pointseg::net {

/// (channels - mean) / std per input channel, using the graph's constants.
Tensor normalize_input(const Tensor& channels, const GraphConfig& graph);

/// Class probabilities (H x W x classes) for a projected frame. The parameter
/// set is validated first; a malformed one throws ShapeError naming the first
/// inconsistent layer.
Tensor model_forward(const proj::SphericalFrame& frame, const ModelParams& params, Trace* trace = nullptr);
Tensor model_forward(const Tensor& channels, const ModelParams& params, Trace* trace = nullptr);

/// Per-pixel argmax; ties go to the lower class id.
ClassMap predict(const Tensor& probabilities);
ClassMap predict(const proj::SphericalFrame& frame, const ModelParams& params);

/// Sets unoccupied pixels to background.
ClassMap mask_unoccupied(ClassMap map, const proj::SphericalFrame& frame);

/// Mean over pixels of -w[label] * log(p[label] + 1e-8).
double loss(const Tensor& probabilities, const ClassMap& labels, std::span<const float> class_weights);

}  // namespace pointseg::net
