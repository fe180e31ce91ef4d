#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abstain/network.hpp"

namespace abstain {

/// A class index or the distinguished abstain answer.
class Label {
 public:
  static Label of(std::size_t cls) { return Label(cls, false); }
  static Label abstain() { return Label(0, true); }

  bool is_abstain() const { return abstain_; }
  bool is(std::size_t cls) const { return !abstain_ && cls_ == cls; }
  /// Class index; throws for the abstain label.
  std::size_t index() const;
  std::string to_string() const;

  bool operator==(const Label&) const = default;

 private:
  Label(std::size_t cls, bool abstain) : cls_(cls), abstain_(abstain) {}
  std::size_t cls_;
  bool abstain_;
};

/// Per-channel (x - mean) / std applied in front of the network, so inputs
/// and attack radii stay in raw [0, 1] units. Statistics of length 1
/// broadcast; otherwise one entry per channel, where the channel of a
/// (C, H, W) input is its leading index and a flat input has one channel per
/// feature.
struct Standardization {
  std::vector<float> mean{0.0f};
  std::vector<float> stddev{1.0f};

  static Standardization fit(std::span<const Tensor> inputs, std::size_t channels);
  static std::size_t channel_count(const Shape& input_shape);

  void validate(const Shape& input_shape) const;
  Tensor apply(const Tensor& x) const;
  /// 1 / std for every coordinate of an input of `shape` (chain rule back to
  /// raw inputs).
  std::vector<float> inverse_scale(const Shape& shape) const;
  bool operator==(const Standardization&) const = default;
};

std::vector<double> softmax(std::span<const float> logits);
std::vector<double> log_softmax(std::span<const float> logits);

/// Classifier over num_classes labels, optionally with one extra abstain
/// output at index num_classes.
class Classifier {
 public:
  Classifier(Network net, std::size_t num_classes, bool abstaining, Standardization standardization = {});

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  std::size_t num_classes() const { return num_classes_; }
  bool abstaining() const { return abstaining_; }
  std::optional<std::size_t> abstain_index() const {
    return abstaining_ ? std::optional<std::size_t>(num_classes_) : std::nullopt;
  }
  std::size_t output_size() const { return num_classes_ + (abstaining_ ? 1 : 0); }
  const Shape& input_shape() const { return net_.input_shape(); }
  const Standardization& standardization() const { return standardization_; }

  Tensor logits(const Tensor& x) const;
  std::vector<double> probabilities(const Tensor& x) const;
  Label predict(const Tensor& x) const;
  Label label_from_logits(std::span<const float> logits) const;

  /// Forward trace on the standardized input.
  Trace trace(const Tensor& x) const;
  /// Gradient of <logits, logit_weights> with respect to the raw input.
  Tensor input_gradient(const Trace& trace, const Tensor& logit_weights) const;
  /// Parameter gradients and raw-input gradient.
  Gradients backward(const Trace& trace, const Tensor& logit_weights) const;

  const std::vector<float>& input_scale() const { return inv_scale_; }

  bool operator==(const Classifier& other) const;

 private:
  Network net_;
  std::size_t num_classes_;
  bool abstaining_;
  Standardization standardization_;
  std::vector<float> inv_scale_;
};

/// Argmax with ties to the lowest index.
std::size_t argmax(std::span<const float> values);

std::string serialize_classifier(const Classifier& clf);
Classifier deserialize_classifier(std::string_view text);
void save_classifier(const Classifier& clf, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace abstain
