#pragma once

// Private JSON helpers shared by the serializers.

#include <string>
#include <string_view>

#include "abstain/network.hpp"
#include "json.hpp"

namespace abstain::detail {

using Json = nlohmann::ordered_json;

inline Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed JSON document: ") + e.what());
  }
}

// Floats are widened to double for output; the shortest round-trip decimal
// of that double narrows back to the identical float.
inline Json tensor_to_json(const Tensor& t) {
  Json j;
  j["shape"] = t.shape();
  Json data = Json::array();
  for (float v : t.storage()) data.push_back(static_cast<double>(v));
  j["data"] = std::move(data);
  return j;
}

inline Tensor tensor_from_json(const Json& j) {
  auto shape = j.at("shape").get<Shape>();
  const auto& data = j.at("data");
  std::vector<float> values;
  values.reserve(data.size());
  for (const auto& v : data) values.push_back(static_cast<float>(v.get<double>()));
  try {
    return Tensor(std::move(shape), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

Json network_to_json(const Network& net);
Network network_from_json(const Json& doc);

}  // namespace abstain::detail
