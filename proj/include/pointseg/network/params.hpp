#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "pointseg/network/graph.hpp"
#include "pointseg/tensor.hpp"

namespace pointseg::net {

using TensorMap = std::map<std::string, Tensor>;

/// Every parameter of one network instance, keyed "<layer id>.<part>.<w|b>".
struct ModelParams {
  GraphConfig graph;
  TensorMap tensors;

  const Tensor& at(const std::string& name) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// He-scaled uniform weights (variance 2 / fan_in), zero biases.
/// Bit-identical for equal (graph, seed).
ModelParams init_params(const GraphConfig& graph, std::uint64_t seed);

/// Throws ShapeError naming the first layer id whose tensors are missing,
/// extra, or mis-shaped.
void validate(const ModelParams& params);

/// Binary checkpoint: "PSEG", u16 version, u32 tensor count, then per tensor
/// u16 name length, name bytes, u8 rank, u32 extents, little-endian float32
/// data. The graph configuration travels as the tensor "graph.config".
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

/// Raw named-tensor container underlying the checkpoint format.
void write_tensor_file(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap read_tensor_file(const std::filesystem::path& path);

}  // namespace pointseg::net
