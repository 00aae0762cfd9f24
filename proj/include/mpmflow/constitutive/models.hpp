#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "mpmflow/constitutive/material.hpp"
#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"
#include "mpmflow/core/svd.hpp"

namespace mpmflow {

/// Lame coefficients (mu_L, lambda_L) from Young's modulus and Poisson's ratio.
template <class T>
std::pair<T, T> lame_coefficients(const T& E, const T& nu) {
  if (!(nu < 0.5)) throw ValidationError("lame_coefficients: nu >= 0.5 is the incompressible limit");
  if (!(E > 0.0) || !(nu > -1.0)) throw ValidationError("lame_coefficients: need E > 0 and nu > -1");
  const T mu = E / (2.0 * (1.0 + nu));
  const T lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  return {mu, lambda};
}

template <class T>
std::pair<T, T> lame_coefficients(const MaterialParams<T>& p) {
  return lame_coefficients(p.E(), p.nu());
}

/// Lame coefficients a solid kind actually uses (sand has fixed elastic constants).
template <class T>
std::pair<T, T> solid_lame(MaterialType kind, const MaterialParams<T>& p) {
  if (kind == MaterialType::Sand) return lame_coefficients(T(kSandYoungsModulus), T(kSandPoissonRatio));
  return lame_coefficients(p);
}

/// Friction coefficient of the Drucker-Prager cone for a friction angle in degrees.
template <class T>
T drucker_prager_alpha(const T& theta_deg) {
  const T s = sin(theta_deg * (std::numbers::pi / 180.0));
  return std::sqrt(2.0 / 3.0) * (2.0 * s) / (3.0 - s);
}

namespace detail {

template <class T>
void require_positive_det(const Mat3<T>& F, const char* who) {
  if (!all_finite(F)) throw InvertedElementError(std::string(who) + ": non-finite deformation gradient");
  if (!(determinant(values_of(F)) > 0.0)) throw InvertedElementError(std::string(who) + ": det(F) <= 0");
}

/// Hencky strain (log singular values) split into mean and deviatoric parts.
template <class T>
struct HenckyStrain {
  Vec3<T> eps;
  T mean;
  Vec3<T> dev;
  T dev_norm;
};

template <class T>
HenckyStrain<T> hencky(const Vec3<T>& sigma) {
  HenckyStrain<T> h;
  for (std::size_t i = 0; i < 3; ++i) h.eps[i] = log(sigma[i]);
  h.mean = (h.eps[0] + h.eps[1] + h.eps[2]) / 3.0;
  for (std::size_t i = 0; i < 3; ++i) h.dev[i] = h.eps[i] - h.mean;
  h.dev_norm = sqrt(dot(h.dev, h.dev));
  return h;
}

/// F with its Hencky strain replaced by `a + b * eps`: exp(a) * U diag(sigma^b) V^T.
template <class T>
Mat3<T> remap_hencky(const SpectralFrame<T>& frame, const Vec3<T>& sigma, const T& a, const T& b) {
  const T ea = exp(a);
  Vec3<T> g;
  for (std::size_t i = 0; i < 3; ++i) g[i] = ea * pow(sigma[i], b);
  const double eav = value_of(ea), bv = value_of(b);
  const auto& s = frame.svd.sigma;
  return spectral_assemble(
      frame, g, [&](std::size_t i, std::size_t j) { return eav * power_divided_difference(s[i], s[j], bv); }, true);
}

/// Return map that rescales the deviatoric Hencky strain to `target_norm` when it exceeds it.
template <class T>
Mat3<T> scale_deviator_to(const SpectralFrame<T>& frame, const Vec3<T>& sigma,
                          const HenckyStrain<T>& h, const T& target_norm) {
  const T c = target_norm / h.dev_norm;
  return remap_hencky(frame, sigma, h.mean * (1.0 - c), c);
}

}  // namespace detail

/// Kirchhoff stress tau = J * sigma. Used directly by the particle-to-grid transfer.
template <class T>
Mat3<T> kirchhoff_stress(MaterialType kind, const MaterialParams<T>& p, const Mat3<T>& F,
                         const Mat3<T>& velocity_gradient) {
  detail::require_positive_det(F, "cauchy_stress");
  switch (kind) {
    case MaterialType::Elastic:
    case MaterialType::Plasticine:
    case MaterialType::Metal:
    case MaterialType::Foam:
    case MaterialType::Sand: {
      // Fixed corotated: tau = 2 mu (F - R) F^T + lambda J (J - 1) I.
      const auto [mu, lambda] = solid_lame(kind, p);
      const Mat3<T> R = polar_rotation(F);
      const T J = determinant(F);
      return 2.0 * mu * ((F - R) * transpose(F)) + Mat3<T>::identity() * (lambda * J * (J - 1.0));
    }
    case MaterialType::NewtonianFluid: {
      // Linear EOS: pressure kappa (1 - J) resists compression, so sigma = kappa (J - 1) I + viscous.
      const T J = determinant(F);
      const T pressure = p.kappa() * (1.0 - J);
      const Mat3<T> cauchy = Mat3<T>::identity() * (-pressure) +
                             2.0 * p.mu() * deviatoric_part(symmetric_part(velocity_gradient));
      return cauchy * J;
    }
    case MaterialType::NonNewtonianFluid: {
      // Hencky elasticity: tau = U diag(2 mu dev(eps) + kappa tr(eps)) U^T.
      const auto frame = detail::spectral_frame(F);
      const Vec3<T> sigma = frame.sigma();
      const auto h = detail::hencky(sigma);
      const T two_mu = 2.0 * p.mu();
      const T bulk = p.kappa() * (3.0 * h.mean);
      Vec3<T> tau;
      for (std::size_t i = 0; i < 3; ++i) tau[i] = two_mu * h.dev[i] + bulk;
      // tau_i = (kappa - 2 mu / 3) tr(eps) + 2 mu eps_i, so the divided difference is 2 mu dd(log).
      const double two_mu_v = value_of(two_mu);
      const auto& s = frame.svd.sigma;
      return detail::spectral_assemble(
          frame, tau, [&](std::size_t i, std::size_t j) { return two_mu_v * detail::log_divided_difference(s[i], s[j]); },
          false);
    }
  }
  throw ValidationError("cauchy_stress: unknown material type");
}

/// Cauchy stress from the elastic deformation gradient and the velocity gradient.
template <class T>
Mat3<T> cauchy_stress(MaterialType kind, const MaterialParams<T>& p, const Mat3<T>& F_elastic,
                      const Mat3<T>& velocity_gradient) {
  const Mat3<T> tau = kirchhoff_stress(kind, p, F_elastic, velocity_gradient);
  return tau / determinant(F_elastic);
}

/// Projects a trial elastic deformation gradient back to the admissible set of its material.
template <class T>
Mat3<T> return_map(MaterialType kind, const MaterialParams<T>& p, const Mat3<T>& F_trial, double dt) {
  detail::require_positive_det(F_trial, "return_map");
  if (!(dt > 0.0)) throw ValidationError("return_map: dt must be positive");

  switch (kind) {
    case MaterialType::Elastic: return F_trial;

    case MaterialType::NewtonianFluid: {
      const T J = determinant(F_trial);
      return Mat3<T>::identity() * cbrt(J);
    }

    case MaterialType::Plasticine:
    case MaterialType::Metal: {
      const auto frame = detail::spectral_frame(F_trial);
      const Vec3<T> sigma = frame.sigma();
      const auto h = detail::hencky(sigma);
      const auto [mu, lambda] = lame_coefficients(p);
      // Yield when |dev tau| = 2 mu |dev eps| exceeds sqrt(2/3) tau_Y.
      const T radius = std::sqrt(2.0 / 3.0) * p.tau_y() / (2.0 * mu);
      if (!(h.dev_norm > radius)) return F_trial;
      return detail::scale_deviator_to(frame, sigma, h, radius);
    }

    case MaterialType::Foam: {
      if (!(p.eta() > 0.0)) throw ValidationError("return_map: Foam requires eta > 0");
      const auto frame = detail::spectral_frame(F_trial);
      const Vec3<T> sigma = frame.sigma();
      const auto h = detail::hencky(sigma);
      const auto [mu, lambda] = lame_coefficients(p);
      T k = dt * 2.0 * mu / p.eta();
      if (k > 1.0) k = T(1.0);
      // Deviatoric Hencky strain relaxes by (1 - k): eps' = mean * k + (1 - k) * eps.
      return detail::remap_hencky(frame, sigma, h.mean * k, 1.0 - k);
    }

    case MaterialType::Sand: {
      const auto frame = detail::spectral_frame(F_trial);
      const Vec3<T> sigma = frame.sigma();
      const auto h = detail::hencky(sigma);
      const T trace_eps = 3.0 * h.mean;
      if (trace_eps >= 0.0) {
        // Expansion: project to the cone tip (zero strain, rotation kept).
        return detail::remap_hencky(frame, sigma, T(0.0), T(0.0));
      }
      const auto [mu, lambda] = solid_lame(MaterialType::Sand, p);
      const T alpha = drucker_prager_alpha(p.theta_fric());
      const T delta_gamma = h.dev_norm + (3.0 * lambda + 2.0 * mu) / (2.0 * mu) * trace_eps * alpha;
      if (!(delta_gamma > 0.0)) return F_trial;
      const T d = delta_gamma / h.dev_norm;
      return detail::remap_hencky(frame, sigma, d * h.mean, 1.0 - d);
    }

    case MaterialType::NonNewtonianFluid: {
      if (!(p.eta() > 0.0)) throw ValidationError("return_map: NonNewtonianFluid requires eta > 0");
      const auto frame = detail::spectral_frame(F_trial);
      const Vec3<T> sigma = frame.sigma();
      const auto h = detail::hencky(sigma);
      const T two_mu = 2.0 * p.mu();
      const T radius = std::sqrt(2.0 / 3.0) * p.tau_y() / two_mu;
      if (!(h.dev_norm > radius)) return F_trial;
      // Overstress relaxes viscously: backward-Euler Perzyna step with relaxation time eta / (2 mu).
      const T excess = h.dev_norm - radius;
      const T delta_gamma = excess / (1.0 + p.eta() / (two_mu * dt));
      return detail::scale_deviator_to(frame, sigma, h, h.dev_norm - delta_gamma);
    }
  }
  throw ValidationError("return_map: unknown material type");
}

/// Yield function value after projection: positive means outside the admissible set.
/// von Mises kinds report |dev tau| - sqrt(2/3) tau_Y; sand reports the Hencky cone residual.
template <class T>
double yield_function(MaterialType kind, const MaterialParams<T>& p, const Mat3<T>& F) {
  const auto sv = detail::svd3_values(values_of(F));
  const auto h = detail::hencky(sv.sigma);
  switch (kind) {
    case MaterialType::Plasticine:
    case MaterialType::Metal: {
      const auto [mu, lambda] = lame_coefficients(value_of(p.E()), value_of(p.nu()));
      return 2.0 * mu * h.dev_norm - std::sqrt(2.0 / 3.0) * value_of(p.tau_y());
    }
    case MaterialType::NonNewtonianFluid:
      return 2.0 * value_of(p.mu()) * h.dev_norm - std::sqrt(2.0 / 3.0) * value_of(p.tau_y());
    case MaterialType::Sand: {
      const auto [mu, lambda] = lame_coefficients(kSandYoungsModulus, kSandPoissonRatio);
      const double alpha = drucker_prager_alpha(value_of(p.theta_fric()));
      const double tr = 3.0 * h.mean;
      if (tr > 0.0) return tr;
      return h.dev_norm + (3.0 * lambda + 2.0 * mu) / (2.0 * mu) * tr * alpha;
    }
    default: return -1.0;
  }
}

}  // namespace mpmflow
