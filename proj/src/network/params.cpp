#include "pointseg/network/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "pointseg/error.hpp"

namespace pointseg::net {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'S', 'E', 'G'};
constexpr std::uint16_t kVersion = 1;
constexpr const char* kGraphTensor = "graph.config";
constexpr float kGraphEncoding = 1.0f;

Tensor encode_graph(const GraphConfig& g) {
  std::vector<float> v{kGraphEncoding,
                       float(g.height),
                       float(g.width),
                       float(g.in_channels),
                       float(g.num_classes),
                       float(g.base_channels),
                       float(g.el_rates[0]),
                       float(g.el_rates[1]),
                       float(g.el_rates[2]),
                       float(g.sr_reduction)};
  v.insert(v.end(), g.input_mean.begin(), g.input_mean.end());
  v.insert(v.end(), g.input_std.begin(), g.input_std.end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

GraphConfig decode_graph(const Tensor& t) {
  if (t.size() != 20 || t[0] != kGraphEncoding) throw DataError("checkpoint: unrecognized graph.config tensor");
  auto i = [&](std::size_t k) { return static_cast<int>(std::lround(t[k])); };
  GraphConfig g;
  g.height = i(1);
  g.width = i(2);
  g.in_channels = i(3);
  g.num_classes = i(4);
  g.base_channels = i(5);
  g.el_rates = {i(6), i(7), i(8)};
  g.sr_reduction = i(9);
  for (std::size_t k = 0; k < 5; ++k) {
    g.input_mean[k] = t[10 + k];
    g.input_std[k] = t[15 + k];
  }
  return g;
}

template <class T>
void put(std::ostream& os, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  os.write(bytes, sizeof(T));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
  char bytes[sizeof(T)];
  if (!is.read(bytes, sizeof(T))) {
    throw DataError("checkpoint " + path.string() + ": truncated at byte " + std::to_string(is.gcount()));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ShapeError("model parameters: missing tensor " + name);
  return it->second;
}

ModelParams init_params(const GraphConfig& graph, std::uint64_t seed) {
  ModelParams p{graph, {}};
  std::mt19937_64 rng(seed);
  for (const auto& layer : layer_table(graph)) {
    for (const auto& spec : layer.tensors) {
      Tensor t(spec.shape);
      if (!spec.is_bias) {
        const float bound = std::sqrt(6.0f / static_cast<float>(spec.fan_in));
        std::uniform_real_distribution<float> dist(-bound, bound);
        for (float& v : t.data()) v = dist(rng);
      }
      p.tensors.emplace(spec.name, std::move(t));
    }
  }
  return p;
}

void validate(const ModelParams& params) {
  const auto table = layer_table(params.graph);
  std::set<std::string> expected;
  for (const auto& layer : table) {
    for (const auto& spec : layer.tensors) {
      expected.insert(spec.name);
      auto it = params.tensors.find(spec.name);
      if (it == params.tensors.end()) {
        throw ShapeError("layer " + layer.id + ": missing tensor " + spec.name);
      }
      if (it->second.shape() != spec.shape) {
        throw ShapeError("layer " + layer.id + ": tensor " + spec.name + " has shape " +
                         shape_to_string(it->second.shape()) + ", expected " + shape_to_string(spec.shape));
      }
    }
  }
  for (const auto& layer : table) {
    for (const auto& [name, _] : params.tensors) {
      if (name.rfind(layer.id + ".", 0) == 0 && !expected.count(name)) {
        throw ShapeError("layer " + layer.id + ": unexpected tensor " + name);
      }
    }
  }
  for (const auto& [name, _] : params.tensors) {
    if (!expected.count(name)) {
      throw ShapeError("layer " + name.substr(0, name.find('.')) + ": unknown tensor " + name);
    }
  }
}

void write_tensor_file(const TensorMap& tensors, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw DataError("checkpoint: tensor name too long: " + name);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw DataError("failed writing " + path.string());
}

TensorMap read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint " + path.string() + ": bad magic, expected \"PSEG\"");
  }
  const auto version = get<std::uint16_t>(is, path);
  if (version != kVersion) {
    throw DataError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(is, path);
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("checkpoint " + path.string() + ": truncated tensor name");
    const auto rank = get<std::uint8_t>(is, path);
    if (rank == 0) throw DataError("checkpoint " + path.string() + ": tensor " + name + " has rank 0");
    Shape shape(rank);
    for (auto& e : shape) {
      e = get<std::uint32_t>(is, path);
      if (e == 0) throw DataError("checkpoint " + path.string() + ": tensor " + name + " has a zero extent");
    }
    std::vector<float> data(shape_size(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)))) {
      throw DataError("checkpoint " + path.string() + ": truncated data for tensor " + name);
    }
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw DataError("checkpoint " + path.string() + ": duplicate tensor " + name);
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw DataError("checkpoint " + path.string() + ": trailing bytes after last tensor");
  }
  return out;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  TensorMap all = params.tensors;
  all.insert_or_assign(kGraphTensor, encode_graph(params.graph));
  write_tensor_file(all, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  TensorMap all = read_tensor_file(path);
  auto node = all.extract(kGraphTensor);
  if (node.empty()) throw DataError("checkpoint " + path.string() + ": missing graph.config");
  ModelParams p{decode_graph(node.mapped()), std::move(all)};
  try {
    validate(p);
  } catch (const ShapeError& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
  return p;
}

}  // namespace pointseg::net
