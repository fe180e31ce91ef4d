#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "abstain/tensor.hpp"

namespace abstain {

enum class LayerKind { dense, conv2d, maxpool, softplus };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One stage of a feedforward chain. Dense layers flatten whatever they
/// receive; conv2d and maxpool expect (channels, height, width) inputs and
/// use no padding.
struct LayerSpec {
  LayerKind kind = LayerKind::softplus;
  std::size_t in = 0;      // dense: input features, conv2d: input channels
  std::size_t out = 0;     // dense: output features, conv2d: output channels
  std::size_t kernel = 0;  // conv2d / maxpool window edge
  std::size_t stride = 1;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel, std::size_t stride = 1);
  static LayerSpec maxpool(std::size_t kernel, std::size_t stride);
  static LayerSpec softplus();

  bool operator==(const LayerSpec&) const = default;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

/// Malformed or version-mismatched serialized document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared; `layer` is the index of the layer that
/// produced it (or the layer count when raised from a gradient check).
class NumericError : public NetworkError {
 public:
  NumericError(std::size_t layer, const std::string& what)
      : NetworkError(what), layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

/// All trainable tensors of a network, in layer order (weight then bias for
/// every dense / conv2d layer).
using Parameters = std::vector<Tensor>;

Parameters zeros_like(const Parameters& params);
void add_scaled(Parameters& into, const Parameters& from, float scale = 1.0f);
std::size_t count_values(const Parameters& params);

/// Activations recorded by a forward pass: `values[0]` is the input and
/// `values[i + 1]` the output of layer i.
struct Trace {
  std::vector<Tensor> values;
  const Tensor& output() const { return values.back(); }
};

struct Gradients {
  Parameters params;
  Tensor input;
};

class Network {
 public:
  /// Builds the chain, validating shapes and drawing fan-in-scaled uniform
  /// parameters from `seed`. An empty `input_shape` is inferred from a
  /// leading dense layer.
  Network(std::vector<LayerSpec> layers, std::uint64_t seed, Shape input_shape = {});

  /// Rebuilds a network around existing parameter values (deserialization).
  static Network with_parameters(std::vector<LayerSpec> layers, std::uint64_t seed,
                                 Shape input_shape, Parameters params);

  const std::vector<LayerSpec>& layers() const { return specs_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  std::size_t output_size() const { return shape_size(shapes_.back()); }
  std::uint64_t seed() const { return seed_; }

  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }
  std::size_t parameter_count() const { return count_values(params_); }

  Tensor forward(const Tensor& x) const;
  Trace trace(const Tensor& x) const;

  /// Gradients of <logits, output_grad> with respect to parameters and input.
  Gradients backward(const Tensor& x, const Tensor& output_grad) const;
  Gradients backward(const Trace& trace, const Tensor& output_grad) const;

  /// Input gradient only; skips the parameter-gradient work.
  Tensor input_gradient(const Trace& trace, const Tensor& output_grad) const;

  /// Forward-over-reverse pass. With logits z(x) and the directional
  /// derivative dz = J_x z(x) * direction, returns the parameter gradient of
  /// <primal_weights, z> + <tangent_weights, dz>, and stores
  /// <tangent_weights, dz> in `directional_value` when non-null.
  Parameters directional_backward(const Trace& trace, const Tensor& direction,
                                  const Tensor& primal_weights,
                                  const Tensor& tangent_weights,
                                  double* directional_value = nullptr) const;

 private:
  Network() = default;
  void validate_and_layout();

  std::vector<LayerSpec> specs_;
  std::vector<Shape> shapes_;              // shapes_[i] is the input of layer i
  std::vector<std::size_t> param_offset_;  // first parameter tensor per layer
  Shape input_shape_;
  Parameters params_;
  std::uint64_t seed_ = 0;
};

Network build_network(std::vector<LayerSpec> layers, std::uint64_t seed, Shape input_shape = {});

/// Table-4 style MNIST CNN. `width` scales every channel / hidden count
/// (1.0 gives the full 32-32-64-64-256 layout).
std::vector<LayerSpec> mnist_cnn_layers(std::size_t outputs, double width = 1.0);

/// Softplus multilayer perceptron for flat inputs.
std::vector<LayerSpec> mlp_layers(std::size_t inputs, const std::vector<std::size_t>& hidden,
                                  std::size_t outputs);

std::string serialize_network(const Network& net);
Network deserialize_network(std::string_view text);

}  // namespace abstain
