#include "abstain/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#ifndef ABSTAIN_SOURCE_DIR
#define ABSTAIN_SOURCE_DIR "."
#endif

namespace abstain {

double two_class_boundary(const TwoClassSpec& spec, double u) {
  return 0.5 + spec.amplitude * std::sin(2 * std::numbers::pi * spec.frequency * u);
}

namespace {

// Extremes of the boundary curve over [a, b]: endpoints plus any interior
// crest (sin = 1) or trough (sin = -1).
std::pair<double, double> boundary_range(const TwoClassSpec& spec, double a, double b) {
  double lo = std::min(two_class_boundary(spec, a), two_class_boundary(spec, b));
  double hi = std::max(two_class_boundary(spec, a), two_class_boundary(spec, b));
  if (spec.frequency > 0) {
    // Crests at u = (1/4 + k) / f, troughs at u = (3/4 + k) / f.
    for (double phase : {0.25, 0.75}) {
      const double k0 = std::ceil(a * spec.frequency - phase);
      const double u = (phase + k0) / spec.frequency;
      if (u <= b) {
        const double c = two_class_boundary(spec, u);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
  }
  return {lo, hi};
}

}  // namespace

Dataset gen_two_class_2d(std::mt19937_64& rng, const TwoClassSpec& spec) {
  if (spec.n < 2) throw std::invalid_argument("two-class dataset needs n >= 2");
  if (!(spec.gap >= 0)) throw std::invalid_argument("gap must be >= 0");
  if (!(spec.amplitude >= 0) || !(spec.frequency >= 0)) throw std::invalid_argument("curve parameters must be >= 0");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = spec.gap / 2;
  Dataset d{"two-class-2d", {2}, 2, {}, {}};
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t label = i % 2;
    bool placed = false;
    for (int attempt = 0; attempt < 1000000 && !placed; ++attempt) {
      const double u = unit(rng), v = unit(rng);
      const auto [lo, hi] = boundary_range(spec, u - r, u + r);
      placed = label == 0 ? v - r > hi : v + r < lo;
      if (placed) {
        d.inputs.push_back(Tensor::vector({static_cast<float>(u), static_cast<float>(v)}));
        d.labels.push_back(label);
      }
    }
    if (!placed) throw std::invalid_argument("no room for class " + std::to_string(label) + " at this gap");
  }
  return d;
}

double min_interclass_distance(const Dataset& data) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = i + 1; j < data.size(); ++j) {
      if (data.labels[i] != data.labels[j]) best = std::min(best, linf_distance(data.inputs[i], data.inputs[j]));
    }
  }
  return best;
}

std::vector<Tensor> gen_uniform_noise(std::mt19937_64& rng, std::size_t n, const Shape& shape) {
  if (n == 0) throw std::invalid_argument("noise batch must be non-empty");
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t(shape);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = unit(rng);
    out.push_back(std::move(t));
  }
  return out;
}

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open IDX file " + path.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (raw.size() < 4) throw IdxTruncatedError("IDX header truncated" + where);
  if (raw[0] != 0 || raw[1] != 0) throw IdxMagicError("bad IDX magic" + where);
  if (raw[2] != 0x08) throw IdxMagicError("IDX element type " + std::to_string(raw[2]) + " is not unsigned byte" + where);
  const std::size_t ndims = raw[3];
  if (ndims == 0) throw IdxDimensionError("IDX file has no dimensions" + where);
  if (raw.size() < 4 + 4 * ndims) throw IdxTruncatedError("IDX dimension table truncated" + where);
  IdxArray out;
  std::size_t count = 1;
  for (std::size_t k = 0; k < ndims; ++k) {
    const std::uint8_t* p = raw.data() + 4 + 4 * k;
    const std::size_t dim = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
    if (dim != 0 && count > std::numeric_limits<std::uint32_t>::max() / dim) {
      throw IdxDimensionError("IDX dimensions overflow" + where);
    }
    count *= dim;
    out.dims.push_back(dim);
  }
  const std::size_t offset = 4 + 4 * ndims;
  if (raw.size() - offset < count) {
    throw IdxTruncatedError("IDX payload truncated: expected " + std::to_string(count) + " bytes, found " +
                            std::to_string(raw.size() - offset) + where);
  }
  out.bytes.assign(raw.begin() + static_cast<std::ptrdiff_t>(offset),
                   raw.begin() + static_cast<std::ptrdiff_t>(offset + count));
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  if (array.dims.empty() || array.dims.size() > 255) throw IdxDimensionError("IDX needs 1 to 255 dimensions");
  std::size_t count = 1;
  for (auto d : array.dims) count *= d;
  if (count != array.bytes.size()) throw IdxDimensionError("IDX payload does not match its dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError("cannot write IDX file " + path.string());
  const char header[4] = {0, 0, 0x08, static_cast<char>(array.dims.size())};
  out.write(header, 4);
  for (auto d : array.dims) {
    const char b[4] = {static_cast<char>(d >> 24), static_cast<char>(d >> 16), static_cast<char>(d >> 8),
                       static_cast<char>(d)};
    out.write(b, 4);
  }
  out.write(reinterpret_cast<const char*>(array.bytes.data()), static_cast<std::streamsize>(array.bytes.size()));
}

Tensor load_idx(const std::filesystem::path& path) {
  IdxArray a = read_idx(path);
  Tensor out(Shape(a.dims.begin(), a.dims.end()));
  for (std::size_t i = 0; i < a.bytes.size(); ++i) out[i] = static_cast<float>(a.bytes[i]) / 255.0f;
  return out;
}

std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
  IdxArray a = read_idx(path);
  if (a.dims.size() != 1) throw IdxDimensionError("label file must be one-dimensional: " + path.string());
  return {a.bytes.begin(), a.bytes.end()};
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("ABSTAIN_DATA_DIR"); env && *env) return env;
  return std::filesystem::path(ABSTAIN_SOURCE_DIR) / "data" / "mnist5k";
}

Dataset load_mnist(const std::filesystem::path& dir, const std::string& split, std::size_t limit) {
  std::string prefix;
  if (split == "train") {
    prefix = "train";
  } else if (split == "test") {
    prefix = "t10k";
  } else {
    throw std::invalid_argument("MNIST split must be 'train' or 'test'");
  }
  const Tensor images = load_idx(dir / (prefix + "-images-idx3-ubyte"));
  const auto labels = load_idx_labels(dir / (prefix + "-labels-idx1-ubyte"));
  if (images.shape().size() != 3) throw IdxDimensionError("MNIST images must be (N, H, W)");
  const std::size_t n = images.shape()[0];
  if (labels.size() != n) throw IdxDimensionError("MNIST image and label counts differ");
  const std::size_t keep = limit ? std::min(limit, n) : n;
  const Shape shape{1, images.shape()[1], images.shape()[2]};
  const std::size_t per = shape_size(shape);
  Dataset d{"mnist-" + split, shape, 10, {}, {}};
  for (std::size_t i = 0; i < keep; ++i) {
    std::vector<float> v(images.data() + i * per, images.data() + (i + 1) * per);
    d.inputs.emplace_back(shape, std::move(v));
    d.labels.push_back(labels[i]);
  }
  d.validate();
  return d;
}

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "label";
  const std::size_t dim = shape_size(data.input_shape);
  for (std::size_t k = 0; k < dim; ++k) out << ",x" << k;
  out << '\n' << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (float v : data.inputs[i].values()) out << ',' << v;
    out << '\n';
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path, std::size_t num_classes, Shape input_shape) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) {
    throw std::runtime_error(path.string() + ": missing 'label,...' header");
  }
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (input_shape.empty()) input_shape = {columns};
  if (shape_size(input_shape) != columns) throw std::runtime_error(path.string() + ": column count does not match shape");
  Dataset d{path.stem().string(), input_shape, num_classes, {}, {}};
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<float> values;
    std::size_t label = 0;
    bool first = true;
    try {
      while (std::getline(ss, cell, ',')) {
        if (first) {
          label = std::stoul(cell);
          first = false;
        } else {
          values.push_back(std::stof(cell));
        }
      }
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": unreadable value on line " + std::to_string(row));
    }
    if (values.size() != columns) throw std::runtime_error(path.string() + ": wrong column count on line " + std::to_string(row));
    d.inputs.emplace_back(input_shape, std::move(values));
    d.labels.push_back(label);
  }
  d.validate();
  return d;
}

}  // namespace abstain
