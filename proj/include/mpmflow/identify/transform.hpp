#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mpmflow/constitutive/material.hpp"
#include "mpmflow/core/dual.hpp"
#include "mpmflow/core/error.hpp"

namespace mpmflow {

/// How a parameter maps between physical units and the optimizer's unconstrained space.
enum class TransformKind { Log, ScaledSigmoid };

struct ParamTransform {
  TransformKind kind = TransformKind::Log;
  double upper = 1.0;  ///< range (0, upper) of the scaled sigmoid
};

inline ParamTransform transform_for(Param p) {
  switch (p) {
    case Param::Nu: return {TransformKind::ScaledSigmoid, 0.5};
    case Param::ThetaFric: return {TransformKind::ScaledSigmoid, 90.0};
    default: return {TransformKind::Log, 1.0};
  }
}

namespace detail {

// Clamping keeps exp() finite and positive and the sigmoid strictly inside (0, 1).
inline constexpr double kLogClamp = 700.0;
inline constexpr double kLogitClamp = 30.0;

template <class T>
T logistic(const T& z) {
  if (z >= 0.0) return 1.0 / (1.0 + exp(-z));
  const T e = exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Physical value -> unconstrained coordinate.
inline double to_unconstrained(Param p, double value) {
  if (auto why = param_range_violation(p, value)) throw ValidationError("to_unconstrained: " + *why);
  const auto t = transform_for(p);
  if (t.kind == TransformKind::Log) return std::log(value);
  return std::log(value / (t.upper - value));
}

/// Unconstrained coordinate -> physical value; always inside the admissible range.
template <class T>
T from_unconstrained(Param p, const T& z) {
  const auto t = transform_for(p);
  if (t.kind == TransformKind::Log) {
    const T zc = z > detail::kLogClamp ? T(detail::kLogClamp) : (z < -detail::kLogClamp ? T(-detail::kLogClamp) : z);
    return exp(zc);
  }
  const T zc = z > detail::kLogitClamp ? T(detail::kLogitClamp) : (z < -detail::kLogitClamp ? T(-detail::kLogitClamp) : z);
  return t.upper * detail::logistic(zc);
}

/// Derivative of from_unconstrained with respect to z.
inline double from_unconstrained_derivative(Param p, double z) {
  Dual<1> d = from_unconstrained(p, Dual<1>::variable(z, 0));
  return d.tangent[0];
}

/// Active parameters in storage order.
inline std::vector<Param> active_list(const ParamMask& mask) {
  std::vector<Param> out;
  for (auto p : kAllParams)
    if (mask.test(static_cast<std::size_t>(p))) out.push_back(p);
  return out;
}

/// Unconstrained coordinates of the masked parameters, in storage order.
inline std::vector<double> to_unconstrained(const MaterialParams<double>& params, const ParamMask& mask) {
  std::vector<double> z;
  for (auto p : active_list(mask)) z.push_back(to_unconstrained(p, params[p]));
  return z;
}

/// Replaces the masked entries of `base` with the images of `z`.
inline MaterialParams<double> from_unconstrained(const std::vector<double>& z, const ParamMask& mask,
                                                 MaterialParams<double> base) {
  const auto list = active_list(mask);
  if (z.size() != list.size()) throw ValidationError("from_unconstrained: coordinate count does not match mask");
  for (std::size_t i = 0; i < list.size(); ++i) base.set(list[i], from_unconstrained(list[i], z[i]));
  return base;
}

}  // namespace mpmflow
