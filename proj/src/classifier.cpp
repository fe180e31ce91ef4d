#include "abstain/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_detail.hpp"

namespace abstain {

namespace {
constexpr int kClassifierFormatVersion = 1;
}

std::size_t Label::index() const {
  if (abstain_) throw std::logic_error("abstain label has no class index");
  return cls_;
}

std::string Label::to_string() const { return abstain_ ? std::string("abstain") : std::to_string(cls_); }

std::size_t Standardization::channel_count(const Shape& input_shape) {
  return input_shape.size() == 3 ? input_shape[0] : shape_size(input_shape);
}

Standardization Standardization::fit(std::span<const Tensor> inputs, std::size_t channels) {
  if (inputs.empty()) throw std::invalid_argument("cannot fit standardization on an empty dataset");
  if (channels == 0) throw std::invalid_argument("channel count must be positive");
  const std::size_t per_channel = inputs.front().size() / channels;
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  for (const auto& x : inputs) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t c = i / per_channel;
      sum[c] += x[i];
      sq[c] += static_cast<double>(x[i]) * x[i];
    }
  }
  const double n = static_cast<double>(inputs.size() * per_channel);
  Standardization s;
  s.mean.resize(channels);
  s.stddev.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / n;
    const double var = std::max(0.0, sq[c] / n - mean * mean);
    s.mean[c] = static_cast<float>(mean);
    s.stddev[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return s;
}

void Standardization::validate(const Shape& input_shape) const {
  if (mean.size() != stddev.size() || mean.empty()) {
    throw std::invalid_argument("standardization mean/std lengths differ");
  }
  if (mean.size() != 1 && mean.size() != channel_count(input_shape)) {
    throw std::invalid_argument("standardization has " + std::to_string(mean.size()) +
                                " channels, input " + shape_to_string(input_shape) + " has " +
                                std::to_string(channel_count(input_shape)));
  }
  for (float s : stddev) {
    if (!(s > 0.0f) || !std::isfinite(s)) throw std::invalid_argument("standardization std must be positive");
  }
}

Tensor Standardization::apply(const Tensor& x) const {
  Tensor out(x.shape());
  const std::size_t per_channel = x.size() / mean.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = i / per_channel;
    out[i] = (x[i] - mean[c]) / stddev[c];
  }
  return out;
}

std::vector<float> Standardization::inverse_scale(const Shape& shape) const {
  const std::size_t n = shape_size(shape);
  const std::size_t per_channel = n / mean.size();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0f / stddev[i / per_channel];
  return out;
}

std::vector<double> log_softmax(std::span<const float> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (float z : logits) sum += std::exp(static_cast<double>(z) - top);
  const double lse = top + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

std::vector<double> softmax(std::span<const float> logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Classifier::Classifier(Network net, std::size_t num_classes, bool abstaining, Standardization standardization)
    : net_(std::move(net)),
      num_classes_(num_classes),
      abstaining_(abstaining),
      standardization_(std::move(standardization)) {
  if (num_classes_ == 0) throw std::invalid_argument("classifier needs at least one class");
  if (net_.output_size() != output_size()) {
    throw ShapeError("network has " + std::to_string(net_.output_size()) + " outputs, classifier needs " +
                     std::to_string(output_size()));
  }
  standardization_.validate(net_.input_shape());
  inv_scale_ = standardization_.inverse_scale(net_.input_shape());
}

Trace Classifier::trace(const Tensor& x) const {
  if (x.size() != shape_size(input_shape())) {
    throw ShapeError("input shape " + shape_to_string(x.shape()) + " does not match classifier input " +
                     shape_to_string(input_shape()));
  }
  return net_.trace(standardization_.apply(x.shape() == input_shape() ? x : x.reshaped(input_shape())));
}

Tensor Classifier::logits(const Tensor& x) const { return trace(x).output(); }

std::vector<double> Classifier::probabilities(const Tensor& x) const { return softmax(logits(x).values()); }

Label Classifier::label_from_logits(std::span<const float> logits) const {
  const std::size_t best = argmax(logits);
  if (abstaining_ && best == num_classes_) return Label::abstain();
  return Label::of(best);
}

Label Classifier::predict(const Tensor& x) const { return label_from_logits(logits(x).values()); }

Tensor Classifier::input_gradient(const Trace& trace, const Tensor& logit_weights) const {
  Tensor g = net_.input_gradient(trace, logit_weights);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv_scale_[i];
  return g;
}

Gradients Classifier::backward(const Trace& trace, const Tensor& logit_weights) const {
  Gradients g = net_.backward(trace, logit_weights);
  for (std::size_t i = 0; i < g.input.size(); ++i) g.input[i] *= inv_scale_[i];
  return g;
}

bool Classifier::operator==(const Classifier& other) const {
  return num_classes_ == other.num_classes_ && abstaining_ == other.abstaining_ &&
         standardization_ == other.standardization_ && net_.layers() == other.net_.layers() &&
         net_.input_shape() == other.net_.input_shape() && net_.seed() == other.net_.seed() &&
         net_.parameters() == other.net_.parameters();
}

std::string serialize_classifier(const Classifier& clf) {
  detail::Json doc;
  doc["format"] = "abstain-classifier";
  doc["version"] = kClassifierFormatVersion;
  doc["num_classes"] = clf.num_classes();
  doc["abstaining"] = clf.abstaining();
  detail::Json stdz;
  std::vector<double> mean(clf.standardization().mean.begin(), clf.standardization().mean.end());
  std::vector<double> sd(clf.standardization().stddev.begin(), clf.standardization().stddev.end());
  stdz["mean"] = mean;
  stdz["std"] = sd;
  doc["standardization"] = std::move(stdz);
  doc["network"] = detail::network_to_json(clf.network());
  return doc.dump(1);
}

Classifier deserialize_classifier(std::string_view text) {
  const auto doc = detail::parse_json(text);
  try {
    if (doc.at("format").get<std::string>() != "abstain-classifier") throw FormatError("not a classifier document");
    const int version = doc.at("version").get<int>();
    if (version != kClassifierFormatVersion) {
      throw FormatError("unsupported classifier format version " + std::to_string(version));
    }
    Standardization s;
    s.mean.clear();
    s.stddev.clear();
    for (const auto& v : doc.at("standardization").at("mean")) s.mean.push_back(static_cast<float>(v.get<double>()));
    for (const auto& v : doc.at("standardization").at("std")) s.stddev.push_back(static_cast<float>(v.get<double>()));
    return Classifier(detail::network_from_json(doc.at("network")), doc.at("num_classes").get<std::size_t>(),
                      doc.at("abstaining").get<bool>(), std::move(s));
  } catch (const detail::Json::exception& e) {
    throw FormatError(std::string("malformed classifier document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("inconsistent classifier document: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent classifier document: ") + e.what());
  }
}

void save_classifier(const Classifier& clf, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_classifier(clf);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Classifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_classifier(buf.str());
}

}  // namespace abstain
