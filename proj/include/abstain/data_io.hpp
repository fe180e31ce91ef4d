#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "abstain/dataset.hpp"

namespace abstain {

/// Two classes in [0, 1]^2 on either side of the curve
/// v = 0.5 + amplitude * sin(2 pi frequency u). Each point is kept only if
/// its closed L-infinity ball of radius gap / 2 lies strictly on its side of
/// the curve, so any two points of different classes are more than `gap`
/// apart. Labels alternate, so n = 2 gives one point per class.
struct TwoClassSpec {
  std::size_t n = 200;
  double gap = 0.1;
  double amplitude = 0.15;
  double frequency = 1.5;
};

Dataset gen_two_class_2d(std::mt19937_64& rng, const TwoClassSpec& spec);
/// Boundary height of the curve at u.
double two_class_boundary(const TwoClassSpec& spec, double u);
/// Smallest L-infinity distance between points of different classes.
double min_interclass_distance(const Dataset& data);

/// n i.i.d. uniform [0, 1] inputs of the given shape.
std::vector<Tensor> gen_uniform_noise(std::mt19937_64& rng, std::size_t n, const Shape& shape);

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxMagicError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxDimensionError : public IdxError {
 public:
  using IdxError::IdxError;
};

/// Unsigned-byte IDX file: dimensions and raw payload.
struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> bytes;
};

IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);
/// Image file (N, H, W) scaled to [0, 1].
Tensor load_idx(const std::filesystem::path& path);
/// Label file (N,) as class indices.
std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path);

/// ABSTAIN_DATA_DIR if set, else the data/mnist5k directory of the source tree.
std::filesystem::path default_data_dir();

/// MNIST-format split ("train" or "test") from `dir`, optionally truncated to
/// the first `limit` examples. Inputs have shape (1, 28, 28).
Dataset load_mnist(const std::filesystem::path& dir, const std::string& split, std::size_t limit = 0);

/// Dataset CSV: header "label,x0,x1,...", one example per row, flat inputs.
void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path, std::size_t num_classes, Shape input_shape = {});

}  // namespace abstain
