#include "abstain/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json_detail.hpp"

namespace abstain {

namespace {

constexpr int kNetworkFormatVersion = 1;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool has_parameters(LayerKind kind) { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

std::string describe(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(spec.kind)) + ")";
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t out_channels, out_height, out_width;
  std::size_t kernel, stride;
};

ConvGeometry conv_geometry(const Shape& in, const LayerSpec& spec) {
  ConvGeometry g{};
  g.channels = in[0];
  g.height = in[1];
  g.width = in[2];
  g.kernel = spec.kernel;
  g.stride = spec.stride;
  g.out_channels = spec.kind == LayerKind::conv2d ? spec.out : in[0];
  g.out_height = (g.height - g.kernel) / g.stride + 1;
  g.out_width = (g.width - g.kernel) / g.stride + 1;
  return g;
}

// out = W * in (+ bias), no padding.
void conv_forward(const ConvGeometry& g, const float* in, const float* weight, const float* bias,
                  float* out) {
  const std::size_t plane = g.out_height * g.out_width;
  std::vector<double> acc(plane);
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias[o]) : 0.0);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const float* channel = in + c * g.height * g.width;
      for (std::size_t p = 0; p < g.kernel; ++p) {
        for (std::size_t q = 0; q < g.kernel; ++q) {
          const double w = weight[((o * g.channels + c) * g.kernel + p) * g.kernel + q];
          for (std::size_t i = 0; i < g.out_height; ++i) {
            const float* row = channel + (i * g.stride + p) * g.width + q;
            double* arow = acc.data() + i * g.out_width;
            if (g.stride == 1) {
              for (std::size_t j = 0; j < g.out_width; ++j) arow[j] += w * row[j];
            } else {
              for (std::size_t j = 0; j < g.out_width; ++j) arow[j] += w * row[j * g.stride];
            }
          }
        }
      }
    }
    float* dst = out + o * plane;
    for (std::size_t k = 0; k < plane; ++k) dst[k] = static_cast<float>(acc[k]);
  }
}

// grad_in += W^T * grad_out
void conv_backward_input(const ConvGeometry& g, const float* weight, const float* grad_out,
                         double* grad_in) {
  const std::size_t plane = g.out_height * g.out_width;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const float* go = grad_out + o * plane;
    for (std::size_t c = 0; c < g.channels; ++c) {
      double* gc = grad_in + c * g.height * g.width;
      for (std::size_t p = 0; p < g.kernel; ++p) {
        for (std::size_t q = 0; q < g.kernel; ++q) {
          const double w = weight[((o * g.channels + c) * g.kernel + p) * g.kernel + q];
          for (std::size_t i = 0; i < g.out_height; ++i) {
            double* row = gc + (i * g.stride + p) * g.width + q;
            const float* grow = go + i * g.out_width;
            for (std::size_t j = 0; j < g.out_width; ++j) row[j * g.stride] += w * grow[j];
          }
        }
      }
    }
  }
}

// grad_weight += grad_out (x) in, grad_bias += sum(grad_out)
void conv_backward_params(const ConvGeometry& g, const float* in, const float* grad_out,
                          float* grad_weight, float* grad_bias) {
  const std::size_t plane = g.out_height * g.out_width;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const float* go = grad_out + o * plane;
    if (grad_bias) {
      double sum = 0.0;
      for (std::size_t k = 0; k < plane; ++k) sum += go[k];
      grad_bias[o] += static_cast<float>(sum);
    }
    for (std::size_t c = 0; c < g.channels; ++c) {
      const float* channel = in + c * g.height * g.width;
      for (std::size_t p = 0; p < g.kernel; ++p) {
        for (std::size_t q = 0; q < g.kernel; ++q) {
          double sum = 0.0;
          for (std::size_t i = 0; i < g.out_height; ++i) {
            const float* row = channel + (i * g.stride + p) * g.width + q;
            const float* grow = go + i * g.out_width;
            for (std::size_t j = 0; j < g.out_width; ++j) sum += static_cast<double>(grow[j]) * row[j * g.stride];
          }
          grad_weight[((o * g.channels + c) * g.kernel + p) * g.kernel + q] += static_cast<float>(sum);
        }
      }
    }
  }
}

void dense_forward(std::size_t n_in, std::size_t n_out, const float* in, const float* weight,
                   const float* bias, float* out) {
  for (std::size_t o = 0; o < n_out; ++o) {
    const float* w = weight + o * n_in;
    double acc = bias ? static_cast<double>(bias[o]) : 0.0;
    for (std::size_t i = 0; i < n_in; ++i) acc += static_cast<double>(w[i]) * in[i];
    out[o] = static_cast<float>(acc);
  }
}

void dense_backward_input(std::size_t n_in, std::size_t n_out, const float* weight,
                          const float* grad_out, double* grad_in) {
  for (std::size_t o = 0; o < n_out; ++o) {
    const double go = grad_out[o];
    if (go == 0.0) continue;
    const float* w = weight + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += go * w[i];
  }
}

void dense_backward_params(std::size_t n_in, std::size_t n_out, const float* in,
                           const float* grad_out, float* grad_weight, float* grad_bias) {
  for (std::size_t o = 0; o < n_out; ++o) {
    const double go = grad_out[o];
    if (grad_bias) grad_bias[o] += static_cast<float>(go);
    if (go == 0.0) continue;
    float* gw = grad_weight + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) gw[i] += static_cast<float>(go * in[i]);
  }
}

// Index of the first maximal element (row-major) of each pooling window.
std::vector<std::size_t> pool_argmax(const ConvGeometry& g, const float* in) {
  std::vector<std::size_t> arg(g.out_channels * g.out_height * g.out_width);
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.out_height; ++i) {
      for (std::size_t j = 0; j < g.out_width; ++j) {
        std::size_t best = c * g.height * g.width + (i * g.stride) * g.width + j * g.stride;
        for (std::size_t p = 0; p < g.kernel; ++p) {
          for (std::size_t q = 0; q < g.kernel; ++q) {
            const std::size_t idx = c * g.height * g.width + (i * g.stride + p) * g.width + j * g.stride + q;
            if (in[idx] > in[best]) best = idx;
          }
        }
        arg[k++] = best;
      }
    }
  }
  return arg;
}

std::vector<float> to_float(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double d) { return static_cast<float>(d); });
  return out;
}

// Deterministic uniform draw in [-bound, bound) from the top 24 bits.
float uniform_symmetric(std::mt19937_64& rng, double bound) {
  const double u = static_cast<double>(rng() >> 40) * 0x1.0p-24;
  return static_cast<float>((2.0 * u - 1.0) * bound);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::softplus: return "softplus";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "maxpool") return LayerKind::maxpool;
  if (name == "softplus") return LayerKind::softplus;
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  return {LayerKind::dense, in, out, 0, 1};
}
LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride) {
  return {LayerKind::conv2d, in_channels, out_channels, kernel, stride};
}
LayerSpec LayerSpec::maxpool(std::size_t kernel, std::size_t stride) {
  return {LayerKind::maxpool, 0, 0, kernel, stride};
}
LayerSpec LayerSpec::softplus() { return {LayerKind::softplus, 0, 0, 0, 1}; }

Parameters zeros_like(const Parameters& params) {
  Parameters out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape());
  return out;
}

void add_scaled(Parameters& into, const Parameters& from, float scale) {
  if (into.size() != from.size()) throw std::invalid_argument("add_scaled: parameter count mismatch");
  for (std::size_t k = 0; k < into.size(); ++k) {
    if (into[k].size() != from[k].size()) throw std::invalid_argument("add_scaled: tensor size mismatch");
    float* dst = into[k].data();
    const float* src = from[k].data();
    for (std::size_t i = 0; i < into[k].size(); ++i) dst[i] += scale * src[i];
  }
}

std::size_t count_values(const Parameters& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

Network::Network(std::vector<LayerSpec> layers, std::uint64_t seed, Shape input_shape)
    : specs_(std::move(layers)), input_shape_(std::move(input_shape)), seed_(seed) {
  validate_and_layout();
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& spec = specs_[i];
    if (!has_parameters(spec.kind)) continue;
    const std::size_t fan_in = spec.kind == LayerKind::dense ? spec.in : spec.in * spec.kernel * spec.kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t t = param_offset_[i]; t < param_offset_[i] + 2; ++t) {
      for (auto& v : params_[t].storage()) v = uniform_symmetric(rng, bound);
    }
  }
}

Network Network::with_parameters(std::vector<LayerSpec> layers, std::uint64_t seed, Shape input_shape,
                                 Parameters params) {
  Network net;
  net.specs_ = std::move(layers);
  net.input_shape_ = std::move(input_shape);
  net.seed_ = seed;
  net.validate_and_layout();
  if (params.size() != net.params_.size()) {
    throw ShapeError("expected " + std::to_string(net.params_.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != net.params_[k].shape()) {
      throw ShapeError("parameter tensor " + std::to_string(k) + " has shape " +
                       shape_to_string(params[k].shape()) + ", expected " +
                       shape_to_string(net.params_[k].shape()));
    }
  }
  net.params_ = std::move(params);
  return net;
}

void Network::validate_and_layout() {
  if (specs_.empty()) throw ShapeError("network needs at least one layer");
  if (input_shape_.empty()) {
    if (specs_.front().kind != LayerKind::dense) {
      throw ShapeError("input shape is required when the first layer is not dense");
    }
    input_shape_ = {specs_.front().in};
  }
  for (auto d : input_shape_) {
    if (d == 0) throw ShapeError("input dimensions must be positive");
  }
  shapes_.clear();
  param_offset_.clear();
  params_.clear();
  Shape current = input_shape_;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& spec = specs_[i];
    const std::string where = i == 0 ? "input -> " + describe(0, spec)
                                     : describe(i - 1, specs_[i - 1]) + " -> " + describe(i, spec);
    shapes_.push_back(current);
    param_offset_.push_back(params_.size());
    switch (spec.kind) {
      case LayerKind::dense: {
        if (spec.in == 0 || spec.out == 0) throw ShapeError(where + ": dense sizes must be positive");
        if (shape_size(current) != spec.in) {
          throw ShapeError(where + ": expects " + std::to_string(spec.in) + " inputs, got " +
                           shape_to_string(current));
        }
        params_.emplace_back(Shape{spec.out, spec.in});
        params_.emplace_back(Shape{spec.out});
        current = {spec.out};
        break;
      }
      case LayerKind::conv2d:
      case LayerKind::maxpool: {
        if (current.size() != 3) {
          throw ShapeError(where + ": expects a (channels, height, width) input, got " +
                           shape_to_string(current));
        }
        if (spec.kernel == 0 || spec.stride == 0) throw ShapeError(where + ": kernel and stride must be positive");
        if (current[1] < spec.kernel || current[2] < spec.kernel) {
          throw ShapeError(where + ": kernel " + std::to_string(spec.kernel) + " larger than input " +
                           shape_to_string(current));
        }
        if (spec.kind == LayerKind::conv2d) {
          if (spec.out == 0) throw ShapeError(where + ": conv2d needs output channels");
          if (spec.in != current[0]) {
            throw ShapeError(where + ": expects " + std::to_string(spec.in) + " channels, got " +
                             shape_to_string(current));
          }
          params_.emplace_back(Shape{spec.out, spec.in, spec.kernel, spec.kernel});
          params_.emplace_back(Shape{spec.out});
        }
        const auto g = conv_geometry(current, spec);
        current = {g.out_channels, g.out_height, g.out_width};
        break;
      }
      case LayerKind::softplus:
        break;
    }
  }
  shapes_.push_back(current);
}

Trace Network::trace(const Tensor& x) const {
  if (x.shape() != input_shape_ && !(x.size() == shape_size(input_shape_) && input_shape_.size() == 1)) {
    throw ShapeError("input shape " + shape_to_string(x.shape()) + " does not match network input " +
                     shape_to_string(input_shape_));
  }
  Trace t;
  t.values.reserve(specs_.size() + 1);
  t.values.push_back(x.shape() == input_shape_ ? x : x.reshaped(input_shape_));
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& spec = specs_[i];
    const Tensor& in = t.values.back();
    Tensor out(shapes_[i + 1]);
    switch (spec.kind) {
      case LayerKind::dense:
        dense_forward(spec.in, spec.out, in.data(), params_[param_offset_[i]].data(),
                      params_[param_offset_[i] + 1].data(), out.data());
        break;
      case LayerKind::conv2d:
        conv_forward(conv_geometry(shapes_[i], spec), in.data(), params_[param_offset_[i]].data(),
                     params_[param_offset_[i] + 1].data(), out.data());
        break;
      case LayerKind::maxpool: {
        const auto arg = pool_argmax(conv_geometry(shapes_[i], spec), in.data());
        for (std::size_t k = 0; k < arg.size(); ++k) out[k] = in[arg[k]];
        break;
      }
      case LayerKind::softplus:
        for (std::size_t k = 0; k < in.size(); ++k) out[k] = static_cast<float>(softplus(in[k]));
        break;
    }
    if (!out.all_finite()) {
      throw NumericError(i, "non-finite output from " + describe(i, spec));
    }
    t.values.push_back(std::move(out));
  }
  return t;
}

Tensor Network::forward(const Tensor& x) const { return trace(x).values.back(); }

Gradients Network::backward(const Tensor& x, const Tensor& output_grad) const {
  return backward(trace(x), output_grad);
}

namespace {

// Shared reverse sweep. `param_grads` may be null (input gradient only).
Tensor reverse_sweep(const std::vector<LayerSpec>& specs, const std::vector<Shape>& shapes,
                     const std::vector<std::size_t>& offsets, const Parameters& params,
                     const Trace& trace, const Tensor& output_grad, Parameters* param_grads,
                     bool need_input) {
  if (output_grad.size() != trace.output().size()) {
    throw ShapeError("output gradient has " + std::to_string(output_grad.size()) + " values, network has " +
                     std::to_string(trace.output().size()) + " outputs");
  }
  Tensor grad(shapes.back(), output_grad.storage());
  for (std::size_t li = specs.size(); li-- > 0;) {
    const auto& spec = specs[li];
    const Tensor& in = trace.values[li];
    const bool want_input = need_input || li > 0;
    switch (spec.kind) {
      case LayerKind::dense: {
        const Tensor& w = params[offsets[li]];
        if (param_grads) {
          dense_backward_params(spec.in, spec.out, in.data(), grad.data(), (*param_grads)[offsets[li]].data(),
                                (*param_grads)[offsets[li] + 1].data());
        }
        if (want_input) {
          std::vector<double> gin(spec.in, 0.0);
          dense_backward_input(spec.in, spec.out, w.data(), grad.data(), gin.data());
          grad = Tensor(shapes[li], to_float(gin));
        }
        break;
      }
      case LayerKind::conv2d: {
        const auto g = conv_geometry(shapes[li], spec);
        if (param_grads) {
          conv_backward_params(g, in.data(), grad.data(), (*param_grads)[offsets[li]].data(),
                               (*param_grads)[offsets[li] + 1].data());
        }
        if (want_input) {
          std::vector<double> gin(in.size(), 0.0);
          conv_backward_input(g, params[offsets[li]].data(), grad.data(), gin.data());
          grad = Tensor(shapes[li], to_float(gin));
        }
        break;
      }
      case LayerKind::maxpool: {
        if (!want_input) break;
        const auto arg = pool_argmax(conv_geometry(shapes[li], spec), in.data());
        Tensor gin(shapes[li]);
        for (std::size_t k = 0; k < arg.size(); ++k) gin[arg[k]] += grad[k];
        grad = std::move(gin);
        break;
      }
      case LayerKind::softplus: {
        if (!want_input) break;
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = static_cast<float>(grad[k] * sigmoid(in[k]));
        break;
      }
    }
    if (!want_input) break;
  }
  if (param_grads) {
    for (const auto& p : *param_grads) {
      if (!p.all_finite()) throw NumericError(specs.size(), "non-finite parameter gradient");
    }
  }
  if (need_input && !grad.all_finite()) throw NumericError(specs.size(), "non-finite input gradient");
  return grad;
}

}  // namespace

Gradients Network::backward(const Trace& trace, const Tensor& output_grad) const {
  Gradients out;
  out.params = zeros_like(params_);
  Tensor grad = reverse_sweep(specs_, shapes_, param_offset_, params_, trace, output_grad, &out.params, true);
  out.input = grad.reshaped(trace.values.front().shape());
  return out;
}

Tensor Network::input_gradient(const Trace& trace, const Tensor& output_grad) const {
  Tensor grad = reverse_sweep(specs_, shapes_, param_offset_, params_, trace, output_grad, nullptr, true);
  return grad.reshaped(trace.values.front().shape());
}

Parameters Network::directional_backward(const Trace& trace, const Tensor& direction,
                                         const Tensor& primal_weights, const Tensor& tangent_weights,
                                         double* directional_value) const {
  const std::size_t n = specs_.size();
  if (direction.size() != shape_size(input_shape_)) throw ShapeError("direction does not match input shape");
  if (primal_weights.size() != output_size() || tangent_weights.size() != output_size()) {
    throw ShapeError("output weights do not match network outputs");
  }

  // Forward tangent sweep: tangents[i] is d(values[i]) along `direction`.
  std::vector<Tensor> tangents;
  tangents.reserve(n + 1);
  tangents.push_back(Tensor(input_shape_, direction.storage()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = specs_[i];
    const Tensor& in = trace.values[i];
    const Tensor& tin = tangents.back();
    Tensor tout(shapes_[i + 1]);
    switch (spec.kind) {
      case LayerKind::dense:
        dense_forward(spec.in, spec.out, tin.data(), params_[param_offset_[i]].data(), nullptr, tout.data());
        break;
      case LayerKind::conv2d:
        conv_forward(conv_geometry(shapes_[i], spec), tin.data(), params_[param_offset_[i]].data(), nullptr,
                     tout.data());
        break;
      case LayerKind::maxpool: {
        const auto arg = pool_argmax(conv_geometry(shapes_[i], spec), in.data());
        for (std::size_t k = 0; k < arg.size(); ++k) tout[k] = tin[arg[k]];
        break;
      }
      case LayerKind::softplus:
        for (std::size_t k = 0; k < in.size(); ++k) tout[k] = static_cast<float>(sigmoid(in[k]) * tin[k]);
        break;
    }
    tangents.push_back(std::move(tout));
  }
  if (directional_value) {
    double v = 0.0;
    for (std::size_t k = 0; k < tangent_weights.size(); ++k) v += static_cast<double>(tangent_weights[k]) * tangents.back()[k];
    *directional_value = v;
  }

  // Reverse sweep over the (value, tangent) pair.
  Parameters grads = zeros_like(params_);
  Tensor g(shapes_.back(), primal_weights.storage());
  Tensor gd(shapes_.back(), tangent_weights.storage());
  for (std::size_t li = n; li-- > 0;) {
    const auto& spec = specs_[li];
    const Tensor& in = trace.values[li];
    const Tensor& tin = tangents[li];
    const bool want_input = li > 0;
    switch (spec.kind) {
      case LayerKind::dense: {
        float* gw = grads[param_offset_[li]].data();
        float* gb = grads[param_offset_[li] + 1].data();
        dense_backward_params(spec.in, spec.out, in.data(), g.data(), gw, gb);
        dense_backward_params(spec.in, spec.out, tin.data(), gd.data(), gw, nullptr);
        if (want_input) {
          const float* w = params_[param_offset_[li]].data();
          std::vector<double> gin(spec.in, 0.0), gdin(spec.in, 0.0);
          dense_backward_input(spec.in, spec.out, w, g.data(), gin.data());
          dense_backward_input(spec.in, spec.out, w, gd.data(), gdin.data());
          g = Tensor(shapes_[li], to_float(gin));
          gd = Tensor(shapes_[li], to_float(gdin));
        }
        break;
      }
      case LayerKind::conv2d: {
        const auto geo = conv_geometry(shapes_[li], spec);
        float* gw = grads[param_offset_[li]].data();
        float* gb = grads[param_offset_[li] + 1].data();
        conv_backward_params(geo, in.data(), g.data(), gw, gb);
        conv_backward_params(geo, tin.data(), gd.data(), gw, nullptr);
        if (want_input) {
          const float* w = params_[param_offset_[li]].data();
          std::vector<double> gin(in.size(), 0.0), gdin(in.size(), 0.0);
          conv_backward_input(geo, w, g.data(), gin.data());
          conv_backward_input(geo, w, gd.data(), gdin.data());
          g = Tensor(shapes_[li], to_float(gin));
          gd = Tensor(shapes_[li], to_float(gdin));
        }
        break;
      }
      case LayerKind::maxpool: {
        if (!want_input) break;
        const auto arg = pool_argmax(conv_geometry(shapes_[li], spec), in.data());
        Tensor gin(shapes_[li]), gdin(shapes_[li]);
        for (std::size_t k = 0; k < arg.size(); ++k) {
          gin[arg[k]] += g[k];
          gdin[arg[k]] += gd[k];
        }
        g = std::move(gin);
        gd = std::move(gdin);
        break;
      }
      case LayerKind::softplus: {
        if (!want_input) break;
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double s = sigmoid(in[k]);
          const double primal = g[k] * s + gd[k] * s * (1.0 - s) * tin[k];
          g[k] = static_cast<float>(primal);
          gd[k] = static_cast<float>(gd[k] * s);
        }
        break;
      }
    }
  }
  for (const auto& p : grads) {
    if (!p.all_finite()) throw NumericError(n, "non-finite directional parameter gradient");
  }
  return grads;
}

Network build_network(std::vector<LayerSpec> layers, std::uint64_t seed, Shape input_shape) {
  return Network(std::move(layers), seed, std::move(input_shape));
}

std::vector<LayerSpec> mnist_cnn_layers(std::size_t outputs, double width) {
  auto scaled = [width](std::size_t n) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * width)));
  };
  const std::size_t c1 = scaled(32), c2 = scaled(64), hidden = scaled(256);
  return {
      LayerSpec::conv2d(1, c1, 5),  LayerSpec::softplus(),
      LayerSpec::conv2d(c1, c1, 5), LayerSpec::softplus(),
      LayerSpec::maxpool(2, 2),
      LayerSpec::conv2d(c1, c2, 3), LayerSpec::softplus(),
      LayerSpec::conv2d(c2, c2, 3), LayerSpec::softplus(),
      LayerSpec::maxpool(2, 2),
      LayerSpec::dense(c2 * 3 * 3, hidden), LayerSpec::softplus(),
      LayerSpec::dense(hidden, outputs),
  };
}

std::vector<LayerSpec> mlp_layers(std::size_t inputs, const std::vector<std::size_t>& hidden,
                                  std::size_t outputs) {
  std::vector<LayerSpec> layers;
  std::size_t prev = inputs;
  for (auto h : hidden) {
    layers.push_back(LayerSpec::dense(prev, h));
    layers.push_back(LayerSpec::softplus());
    prev = h;
  }
  layers.push_back(LayerSpec::dense(prev, outputs));
  return layers;
}

namespace detail {

Json network_to_json(const Network& net) {
  Json doc;
  doc["format"] = "abstain-network";
  doc["version"] = kNetworkFormatVersion;
  doc["seed"] = net.seed();
  doc["input_shape"] = net.input_shape();
  Json layers = Json::array();
  for (const auto& spec : net.layers()) {
    Json l;
    l["kind"] = std::string(to_string(spec.kind));
    switch (spec.kind) {
      case LayerKind::dense:
        l["in"] = spec.in;
        l["out"] = spec.out;
        break;
      case LayerKind::conv2d:
        l["in"] = spec.in;
        l["out"] = spec.out;
        l["kernel"] = spec.kernel;
        l["stride"] = spec.stride;
        break;
      case LayerKind::maxpool:
        l["kernel"] = spec.kernel;
        l["stride"] = spec.stride;
        break;
      case LayerKind::softplus:
        break;
    }
    layers.push_back(std::move(l));
  }
  doc["layers"] = std::move(layers);
  Json params = Json::array();
  for (const auto& p : net.parameters()) params.push_back(tensor_to_json(p));
  doc["parameters"] = std::move(params);
  return doc;
}

Network network_from_json(const Json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "abstain-network") throw FormatError("not a network document");
    const int version = doc.at("version").get<int>();
    if (version != kNetworkFormatVersion) {
      throw FormatError("unsupported network format version " + std::to_string(version));
    }
    std::vector<LayerSpec> layers;
    for (const auto& l : doc.at("layers")) {
      LayerSpec spec;
      spec.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      spec.in = l.value("in", std::size_t{0});
      spec.out = l.value("out", std::size_t{0});
      spec.kernel = l.value("kernel", std::size_t{0});
      spec.stride = l.value("stride", std::size_t{1});
      layers.push_back(spec);
    }
    Parameters params;
    for (const auto& p : doc.at("parameters")) params.push_back(tensor_from_json(p));
    return Network::with_parameters(std::move(layers), doc.at("seed").get<std::uint64_t>(),
                                    doc.at("input_shape").get<Shape>(), std::move(params));
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed network document: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent network document: ") + e.what());
  }
}

}  // namespace detail

std::string serialize_network(const Network& net) { return detail::network_to_json(net).dump(1); }

Network deserialize_network(std::string_view text) {
  return detail::network_from_json(detail::parse_json(text));
}

}  // namespace abstain
