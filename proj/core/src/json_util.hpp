#pragma once

// Internal JSON helpers shared by the serialization code of several modules.

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lattice/distributions.hpp"
#include "lattice/error.hpp"
#include "lattice/lattice.hpp"

namespace lattice::detail {

using nlohmann::json;

inline json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw UsageError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

template <class T>
T get_field(const json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key)) throw UsageError(std::string(what) + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string(what) + ": bad value for '" + key + "': " + e.what());
  }
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json law_to_json(const Law& law);
Law law_from_json(const json& j);

json lattice_to_json_value(const LatticeSpec& spec);
LatticeSpec lattice_from_json_value(const json& j);
json index_model_to_json_value(const IndexModel& model);
IndexModel index_model_from_json_value(const json& j);

}  // namespace lattice::detail
