#include "pointseg/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "pointseg/error.hpp"

namespace pointseg::io {

static_assert(std::endian::native == std::endian::little, "binary readers assume a little-endian host");

namespace {

std::string read_all(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

void finish(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw DataError("failed writing " + path.string());
}

constexpr char kNpyMagic[] = "\x93NUMPY";

}  // namespace

PointCloud load_velodyne_bin(const fs::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() % 16 != 0) {
    throw DataError(path.string() + ": truncated scan, " + std::to_string(bytes.size() % 16) +
                    " stray bytes at offset " + std::to_string(bytes.size() - bytes.size() % 16));
  }
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    float q[4];
    std::memcpy(q, bytes.data() + i * 16, 16);
    cloud.points[i] = {q[0], q[1], q[2], q[3]};
  }
  return cloud;
}

void save_velodyne_bin(const PointCloud& cloud, const fs::path& path) {
  auto os = open_out(path, true);
  for (const Point& p : cloud.points) {
    const float q[4] = {p.x, p.y, p.z, p.intensity};
    os.write(reinterpret_cast<const char*>(q), sizeof q);
  }
  finish(os, path);
}

Tensor load_frame_array(const fs::path& path, const Shape& expected) {
  const std::string bytes = read_all(path);
  const std::string where = path.string() + ": ";
  if (bytes.size() < 10 || bytes.compare(0, 6, kNpyMagic, 6) != 0) throw DataError(where + "bad magic, not an array container");
  const auto major = static_cast<unsigned char>(bytes[6]), minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0) {
    throw DataError(where + "unsupported container version " + std::to_string(major) + "." + std::to_string(minor));
  }
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  if (bytes.size() < 10 + header_len) throw DataError(where + "truncated header");
  const std::string header = bytes.substr(10, header_len);

  std::smatch m;
  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  if (!std::regex_search(header, m, descr_re)) throw DataError(where + "header lacks 'descr'");
  const std::string descr = m[1];
  std::size_t elem = 0;
  if (descr == "<f4") {
    elem = 4;
  } else if (descr == "<f8") {
    elem = 8;
  } else {
    throw DataError(where + "unsupported dtype '" + descr + "', expected '<f4'");
  }
  if (!std::regex_search(header, m, order_re)) throw DataError(where + "header lacks 'fortran_order'");
  if (m[1] == "True") throw DataError(where + "fortran-order arrays are not supported");
  if (!std::regex_search(header, m, shape_re)) throw DataError(where + "header lacks 'shape'");

  Shape shape;
  {
    std::string dims = m[1];
    std::replace(dims.begin(), dims.end(), ',', ' ');
    std::istringstream ss(dims);
    std::size_t d;
    while (ss >> d) shape.push_back(d);
    if (!ss.eof()) throw DataError(where + "malformed shape in header");
  }
  if (shape != expected) {
    throw DataError(where + "array shape " + shape_to_string(shape) + ", expected " + shape_to_string(expected));
  }
  const std::size_t count = shape_size(shape);
  const std::size_t offset = 10 + header_len;
  if (bytes.size() != offset + count * elem) {
    throw DataError(where + "data size " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                    std::to_string(count * elem));
  }
  std::vector<float> data(count);
  if (elem == 4) {
    std::memcpy(data.data(), bytes.data() + offset, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      std::memcpy(&v, bytes.data() + offset + i * 8, 8);
      data[i] = static_cast<float>(v);
    }
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_frame_array(const Tensor& array, const fs::path& path) {
  std::string dims;
  for (std::size_t i = 0; i < array.rank(); ++i) dims += (i ? ", " : "") + std::to_string(array.dim(i));
  if (array.rank() == 1) dims += ",";
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  auto os = open_out(path, true);
  os.write(kNpyMagic, 6);
  const char version[2] = {1, 0};
  os.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  os.write(len_bytes, 2);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(array.data().data()), static_cast<std::streamsize>(array.size() * 4));
  finish(os, path);
}

Split split_of(const std::string& filename) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : filename) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h % 100 < 74 ? Split::Train : Split::Val;
}

DatasetIndex DatasetIndex::scan(const fs::path& dir, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  DatasetIndex index;
  index.seed = seed;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".npy") index.frames.push_back(entry.path());
  }
  std::sort(index.frames.begin(), index.frames.end());
  for (const auto& f : index.frames) index.splits.push_back(split_of(f.filename().string()));
  return index;
}

std::vector<fs::path> DatasetIndex::subset(Split split) const {
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (splits[i] == split) out.push_back(frames[i]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch) {
  if (count == 0) throw DataError("batches: empty dataset index");
  if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is library-specific.
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return out;
}

std::vector<std::vector<fs::path>> batches(std::span<const fs::path> frames, std::size_t batch_size,
                                           std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::vector<fs::path>> out;
  for (const auto& group : batch_indices(frames.size(), batch_size, seed, epoch)) {
    auto& g = out.emplace_back();
    for (std::size_t i : group) g.push_back(frames[i]);
  }
  return out;
}

Rgb class_color(int id) {
  switch (id) {
    case 1: return {0, 0, 255};
    case 2: return {0, 255, 0};
    case 3: return {255, 0, 0};
    default: return {0, 0, 0};
  }
}

void save_ppm(const fs::path& path, std::size_t width, std::size_t height, std::span<const Rgb> pixels) {
  if (pixels.size() != width * height) throw ShapeError("save_ppm: pixel count does not match the image size");
  auto os = open_out(path, true);
  os << "P6\n" << width << ' ' << height << "\n255\n";
  for (const Rgb& p : pixels) {
    const char rgb[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    os.write(rgb, 3);
  }
  finish(os, path);
}

void save_class_map_image(const ClassMap& map, const fs::path& path) {
  std::vector<Rgb> pixels(map.ids.size());
  std::transform(map.ids.begin(), map.ids.end(), pixels.begin(), [](std::uint8_t id) { return class_color(id); });
  save_ppm(path, map.width, map.height, pixels);
}

void save_range_image(const Tensor& channels, std::size_t range_channel, const fs::path& path) {
  require_feature_map(channels, "save_range_image");
  if (range_channel >= channels.channels()) throw ShapeError("save_range_image: channel out of range");
  const std::size_t h = channels.height(), w = channels.width(), c = channels.channels();
  float max_range = 0;
  for (std::size_t i = 0; i < h * w; ++i) max_range = std::max(max_range, channels[i * c + range_channel]);
  std::vector<Rgb> pixels(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const float r = channels[i * c + range_channel];
    const auto v = static_cast<std::uint8_t>(r > 0 && max_range > 0 ? 255.0f - 205.0f * (r / max_range) : 0.0f);
    pixels[i] = {v, v, v};
  }
  save_ppm(path, w, h, pixels);
}

void save_labeled_cloud(const LabeledCloud& cloud, const fs::path& path) {
  if (cloud.labels.size() != cloud.points.size()) throw ShapeError("save_labeled_cloud: label count mismatch");
  auto os = open_out(path, false);
  char line[128];
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point& p = cloud.points[i];
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %d\n", p.x, p.y, p.z, static_cast<int>(cloud.labels[i]));
    os << line;
  }
  finish(os, path);
}

LabeledCloud load_labeled_cloud(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  LabeledCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Point p;
    int label = -1;
    std::string extra;
    if (!(ss >> p.x >> p.y >> p.z >> label) || (ss >> extra) || label < 0 || label >= kNumClasses) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected \"x y z label\"");
    }
    cloud.points.push_back(p);
    cloud.labels.push_back(static_cast<std::uint8_t>(label));
  }
  return cloud;
}

}  // namespace pointseg::io
