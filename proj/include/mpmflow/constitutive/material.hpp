#pragma once

#include <array>
#include <bitset>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "mpmflow/core/dual.hpp"
#include "mpmflow/core/error.hpp"

namespace mpmflow {

enum class MaterialType {
  Elastic,
  Plasticine,
  Metal,
  Foam,
  Sand,
  NewtonianFluid,
  NonNewtonianFluid,
};

inline constexpr std::array<MaterialType, 7> kAllMaterialTypes = {
    MaterialType::Elastic, MaterialType::Plasticine,     MaterialType::Metal,
    MaterialType::Foam,    MaterialType::Sand,           MaterialType::NewtonianFluid,
    MaterialType::NonNewtonianFluid,
};

inline std::string_view to_string(MaterialType t) {
  switch (t) {
    case MaterialType::Elastic: return "Elastic";
    case MaterialType::Plasticine: return "Plasticine";
    case MaterialType::Metal: return "Metal";
    case MaterialType::Foam: return "Foam";
    case MaterialType::Sand: return "Sand";
    case MaterialType::NewtonianFluid: return "NewtonianFluid";
    case MaterialType::NonNewtonianFluid: return "NonNewtonianFluid";
  }
  return "?";
}

inline std::optional<MaterialType> material_type_from_string(std::string_view s) {
  for (auto t : kAllMaterialTypes)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

/// Identifiable material parameters. Order matters: it is the storage index.
enum class Param : int { E, Nu, TauY, Eta, Mu, Kappa, ThetaFric };
inline constexpr int kParamCount = 7;
inline constexpr std::array<Param, kParamCount> kAllParams = {
    Param::E, Param::Nu, Param::TauY, Param::Eta, Param::Mu, Param::Kappa, Param::ThetaFric};

inline std::string_view param_name(Param p) {
  constexpr std::array<std::string_view, kParamCount> names = {"E",  "nu",    "tau_y",     "eta",
                                                               "mu", "kappa", "theta_fric"};
  return names[static_cast<std::size_t>(p)];
}

inline std::optional<Param> param_from_name(std::string_view s) {
  for (auto p : kAllParams)
    if (param_name(p) == s) return p;
  return std::nullopt;
}

using ParamMask = std::bitset<kParamCount>;

inline ParamMask mask_of(std::initializer_list<Param> ps) {
  ParamMask m;
  for (auto p : ps) m.set(static_cast<std::size_t>(p));
  return m;
}

/// Parameters a material type reads; all others are ignored.
inline ParamMask required_params(MaterialType t) {
  switch (t) {
    case MaterialType::Elastic: return mask_of({Param::E, Param::Nu});
    case MaterialType::Plasticine:
    case MaterialType::Metal: return mask_of({Param::E, Param::Nu, Param::TauY});
    case MaterialType::Foam: return mask_of({Param::E, Param::Nu, Param::Eta});
    case MaterialType::Sand: return mask_of({Param::ThetaFric});
    case MaterialType::NewtonianFluid: return mask_of({Param::Mu, Param::Kappa});
    case MaterialType::NonNewtonianFluid: return mask_of({Param::Mu, Param::Kappa, Param::TauY, Param::Eta});
  }
  return {};
}

/// Fixed elastic constants used by sand, whose only identified parameter is the friction angle.
inline constexpr double kSandYoungsModulus = 1e6;
inline constexpr double kSandPoissonRatio = 0.3;

template <class T>
struct MaterialParams {
  std::array<T, kParamCount> values{};
  ParamMask active;

  T& operator[](Param p) { return values[static_cast<std::size_t>(p)]; }
  const T& operator[](Param p) const { return values[static_cast<std::size_t>(p)]; }
  bool is_active(Param p) const { return active.test(static_cast<std::size_t>(p)); }

  const T& E() const { return (*this)[Param::E]; }
  const T& nu() const { return (*this)[Param::Nu]; }
  const T& tau_y() const { return (*this)[Param::TauY]; }
  const T& eta() const { return (*this)[Param::Eta]; }
  const T& mu() const { return (*this)[Param::Mu]; }
  const T& kappa() const { return (*this)[Param::Kappa]; }
  const T& theta_fric() const { return (*this)[Param::ThetaFric]; }

  void set(Param p, T v) {
    (*this)[p] = v;
    active.set(static_cast<std::size_t>(p));
  }
};

template <class To, class From>
MaterialParams<To> params_cast(const MaterialParams<From>& p) {
  MaterialParams<To> r;
  r.active = p.active;
  for (std::size_t i = 0; i < static_cast<std::size_t>(kParamCount); ++i) r.values[i] = scalar_cast<To>(p.values[i]);
  return r;
}

template <class T>
struct MaterialModel {
  MaterialType kind = MaterialType::Elastic;
  MaterialParams<T> params;
  double density = 1000.0;
};

template <class To, class From>
MaterialModel<To> model_cast(const MaterialModel<From>& m) {
  return {m.kind, params_cast<To>(m.params), m.density};
}

/// Checks one parameter against its admissible range; returns an explanation when out of range.
inline std::optional<std::string> param_range_violation(Param p, double v) {
  if (!std::isfinite(v)) return std::string(param_name(p)) + " must be finite";
  switch (p) {
    case Param::Nu:
      if (!(v > 0.0 && v < 0.5)) return "nu must lie in (0, 0.5)";
      return std::nullopt;
    case Param::ThetaFric:
      if (!(v > 0.0 && v < 90.0)) return "theta_fric must lie in (0, 90) degrees";
      return std::nullopt;
    default:
      if (!(v > 0.0)) return std::string(param_name(p)) + " must be positive";
      return std::nullopt;
  }
}

/// Validates a material model: required parameters present and in range, density positive.
/// `where` prefixes error messages with a field path.
template <class T>
void validate_model(const MaterialModel<T>& m, const std::string& where = "material") {
  if (!(m.density > 0.0) || !std::isfinite(m.density))
    throw ValidationError(where + ".density: must be positive");
  const ParamMask need = required_params(m.kind);
  const ParamMask missing = need & ~m.params.active;
  if (missing.any()) {
    std::string names;
    for (auto p : kAllParams)
      if (missing.test(static_cast<std::size_t>(p))) names += (names.empty() ? "" : ", ") + std::string(param_name(p));
    throw ValidationError(where + ".params: " + std::string(to_string(m.kind)) + " requires " + names);
  }
  for (auto p : kAllParams) {
    if (!need.test(static_cast<std::size_t>(p))) continue;
    if (auto why = param_range_violation(p, value_of(m.params[p])))
      throw ValidationError(where + ".params." + std::string(param_name(p)) + ": " + *why);
  }
}

}  // namespace mpmflow
