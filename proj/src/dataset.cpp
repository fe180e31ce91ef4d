#include "abstain/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace abstain {

void Dataset::validate() const {
  if (inputs.size() != labels.size()) throw std::invalid_argument("dataset '" + name + "': inputs and labels differ in count");
  if (num_classes < 2) throw std::invalid_argument("dataset '" + name + "': needs at least two classes");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape() != input_shape) {
      throw std::invalid_argument("dataset '" + name + "': example " + std::to_string(i) + " has shape " +
                                  shape_to_string(inputs[i].shape()) + ", expected " + shape_to_string(input_shape));
    }
    if (labels[i] >= num_classes) {
      throw std::invalid_argument("dataset '" + name + "': label " + std::to_string(labels[i]) + " of example " +
                                  std::to_string(i) + " is out of range");
    }
    const auto v = inputs[i].values();
    if (!std::all_of(v.begin(), v.end(), [](float p) { return p >= 0.0f && p <= 1.0f; })) {
      throw std::invalid_argument("dataset '" + name + "': example " + std::to_string(i) + " leaves [0, 1]");
    }
  }
}

Dataset Dataset::head(std::size_t n) const {
  Dataset out{name, input_shape, num_classes, {}, {}};
  n = std::min(n, size());
  out.inputs.assign(inputs.begin(), inputs.begin() + static_cast<std::ptrdiff_t>(n));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace abstain
