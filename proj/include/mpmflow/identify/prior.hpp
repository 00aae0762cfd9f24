#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "mpmflow/constitutive/material.hpp"
#include "mpmflow/core/error.hpp"

namespace mpmflow {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Material name -> {type, density, initial parameters}. Filled by any external
/// tool (for example a vision-language model adapter) and read as JSON.
using MaterialPrior = std::map<std::string, MaterialModel<double>>;

namespace detail {

inline double json_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected a number");
  return j.get<double>();
}

inline const json& json_member(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(path + "." + key + ": missing");
  return j.at(key);
}

}  // namespace detail

/// Parses one material entry: {"type": ..., "density": ..., "params": {...}}.
inline MaterialModel<double> material_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  MaterialModel<double> m;
  const json& type = detail::json_member(j, "type", path);
  if (!type.is_string()) throw ValidationError(path + ".type: expected a string");
  const auto kind = material_type_from_string(type.get<std::string>());
  if (!kind) throw ValidationError(path + ".type: unknown MaterialType '" + type.get<std::string>() + "'");
  m.kind = *kind;
  m.density = detail::json_number(detail::json_member(j, "density", path), path + ".density");
  if (!(m.density > 0.0)) throw ValidationError(path + ".density: must be positive");

  const json& params = detail::json_member(j, "params", path);
  if (!params.is_object()) throw ValidationError(path + ".params: expected an object");
  ParamMask given;
  for (auto it = params.begin(); it != params.end(); ++it) {
    const auto p = param_from_name(it.key());
    if (!p) throw ValidationError(path + ".params." + it.key() + ": unknown parameter");
    m.params[*p] = detail::json_number(it.value(), path + ".params." + it.key());
    given.set(static_cast<std::size_t>(*p));
  }
  m.params.active = given & required_params(m.kind);
  validate_model(m, path);
  return m;
}

inline ordered_json material_to_json(const MaterialModel<double>& m) {
  ordered_json params = ordered_json::object();
  for (auto p : kAllParams)
    if (m.params.is_active(p)) params[std::string(param_name(p))] = m.params[p];
  ordered_json j;
  j["type"] = std::string(to_string(m.kind));
  j["density"] = m.density;
  j["params"] = params;
  return j;
}

inline MaterialPrior prior_from_json(const json& j, const std::string& path = "prior") {
  if (!j.is_object()) throw ValidationError(path + ": expected an object of named materials");
  MaterialPrior prior;
  for (auto it = j.begin(); it != j.end(); ++it) prior[it.key()] = material_from_json(it.value(), path + "." + it.key());
  return prior;
}

inline ordered_json prior_to_json(const MaterialPrior& prior) {
  ordered_json j = ordered_json::object();
  for (const auto& [name, m] : prior) j[name] = material_to_json(m);
  return j;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const ordered_json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw ValidationError("write failed for " + path.string());
}

/// Loads and validates a material prior file.
inline MaterialPrior load_prior(const std::filesystem::path& path) { return prior_from_json(read_json_file(path)); }

}  // namespace mpmflow
