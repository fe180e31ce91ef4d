#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "abstain/tensor.hpp"

namespace abstain {

/// Labelled inputs in [0, 1]^d.
struct Dataset {
  std::string name;
  Shape input_shape;
  std::size_t num_classes = 0;
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  /// Throws std::invalid_argument on count, shape, range or label problems.
  void validate() const;
  /// First n examples (or all of them).
  Dataset head(std::size_t n) const;
};

}  // namespace abstain
