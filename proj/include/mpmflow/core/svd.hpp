#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "mpmflow/core/dual.hpp"
#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"

namespace mpmflow {

/// m = U diag(sigma) V^T with det(U) = det(V) = +1 and sigma sorted descending.
/// For det(m) < 0 the smallest singular value carries the sign.
template <class T>
struct Svd3 {
  Mat3<T> U;
  Vec3<T> sigma;
  Mat3<T> V;

  Mat3<T> reconstruct() const { return U * Mat3<T>::diag(sigma) * transpose(V); }
};

/// Gap below which singular values are treated as repeated when forming
/// tangents of the singular vectors.
inline constexpr double kSvdGapFloor = 1e-9;

namespace detail {

inline Vec3<double> any_orthogonal(const Vec3<double>& a) {
  const Vec3<double> axis = std::abs(a[0]) < 0.9 ? Vec3<double>{1, 0, 0} : Vec3<double>{0, 1, 0};
  return normalized(cross(a, axis));
}

/// One-sided Jacobi (Hestenes) SVD on plain values.
inline Svd3<double> svd3_values(const Mat3<double>& m) {
  Mat3<double> B = m;
  Mat3<double> V = Mat3<double>::identity();
  constexpr std::pair<std::size_t, std::size_t> kPairs[3] = {{0, 1}, {0, 2}, {1, 2}};
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (auto [p, q] : kPairs) {
      double alpha = 0, beta = 0, gamma = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        alpha += B(k, p) * B(k, p);
        beta += B(k, q) * B(k, q);
        gamma += B(k, p) * B(k, q);
      }
      if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
      rotated = true;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      for (std::size_t k = 0; k < 3; ++k) {
        const double bp = B(k, p), bq = B(k, q);
        B(k, p) = c * bp - s * bq;
        B(k, q) = s * bp + c * bq;
        const double vp = V(k, p), vq = V(k, q);
        V(k, p) = c * vp - s * vq;
        V(k, q) = s * vp + c * vq;
      }
    }
    if (!rotated) break;
  }

  std::array<double, 3> sig{};
  for (std::size_t j = 0; j < 3; ++j) sig[j] = norm(B.column(j));

  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sig[a] > sig[b]; });

  Svd3<double> out;
  Mat3<double> Bs;
  for (std::size_t j = 0; j < 3; ++j) {
    out.sigma[j] = sig[order[j]];
    out.V.set_column(j, V.column(order[j]));
    Bs.set_column(j, B.column(order[j]));
  }

  const double tiny = std::max(out.sigma[0], 1.0) * 1e-300;
  std::array<bool, 3> have{};
  for (std::size_t j = 0; j < 3; ++j) {
    if (out.sigma[j] > tiny) {
      out.U.set_column(j, Bs.column(j) / out.sigma[j]);
      have[j] = true;
    }
  }
  if (!have[0]) {
    out.U = Mat3<double>::identity();
  } else if (!have[1]) {
    const Vec3<double> u0 = out.U.column(0);
    const Vec3<double> u1 = any_orthogonal(u0);
    out.U.set_column(1, u1);
    out.U.set_column(2, cross(u0, u1));
  } else if (!have[2]) {
    out.U.set_column(2, normalized(cross(out.U.column(0), out.U.column(1))));
  }

  if (determinant(out.V) < 0.0) {
    out.V.set_column(2, -out.V.column(2));
    out.U.set_column(2, -out.U.column(2));
  }
  if (determinant(out.U) < 0.0) {
    out.U.set_column(2, -out.U.column(2));
    out.sigma[2] = -out.sigma[2];
  }
  return out;
}

inline double clamp_gap(double gap) {
  if (std::abs(gap) >= kSvdGapFloor) return gap;
  return gap < 0.0 ? -kSvdGapFloor : kSvdGapFloor;
}

/// Value part of a decomposition plus, per tangent slot k, P_k = U^T dF_k V.
template <class T>
struct SpectralFrame {
  Svd3<double> svd;
  std::array<Mat3<double>, static_cast<std::size_t>(tangent_count_v<T>)> P{};

  /// Singular values with their tangents (d sigma_i = P_ii).
  Vec3<T> sigma() const {
    Vec3<T> s;
    for (std::size_t i = 0; i < 3; ++i)
      s[i] = make_scalar<T>(svd.sigma[i], [&](int k) { return P[static_cast<std::size_t>(k)](i, i); });
    return s;
  }
};

template <class T>
SpectralFrame<T> spectral_frame(const Mat3<T>& F) {
  SpectralFrame<T> f;
  f.svd = svd3_values(values_of(F));
  const Mat3<double> Ut = transpose(f.svd.U);
  for (int k = 0; k < tangent_count_v<T>; ++k)
    f.P[static_cast<std::size_t>(k)] = Ut * tangent_matrix(F, k) * f.svd.V;
  return f;
}

/// Assembles U diag(g) V^T (two-sided) or U diag(g) U^T (one-sided) with tangents.
///
/// `g` carries its own tangents (including any dependence on sigma). The
/// off-diagonal rotation terms use the values of g and the caller-supplied
/// divided differences dd(i, j) = (g_j - g_i) / (sigma_j - sigma_i), which
/// stay finite when singular values coincide.
template <class T, class DividedDifference>
Mat3<T> spectral_assemble(const SpectralFrame<T>& frame, const Vec3<T>& g, DividedDifference&& dd,
                          bool two_sided) {
  const auto& sv = frame.svd;
  const Mat3<double>& U = sv.U;
  const Mat3<double> Rt = transpose(two_sided ? sv.V : sv.U);
  Mat3<double> gv = Mat3<double>::diag(value_of(g[0]), value_of(g[1]), value_of(g[2]));
  const Mat3<double> val = U * gv * Rt;
  if constexpr (tangent_count_v<T> == 0) {
    (void)dd;
    return val;
  } else {
    constexpr int N = tangent_count_v<T>;
    double coef_sym[3][3]{};
    double coef_skew[3][3]{};
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == j) continue;
        const double si = sv.sigma[i], sj = sv.sigma[j];
        const double gi = value_of(g[i]), gj = value_of(g[j]);
        coef_sym[i][j] = dd(i, j);
        if (two_sided) {
          coef_skew[i][j] = (gi + gj) / (si + sj);
        } else {
          coef_skew[i][j] = (gj - gi) / (si + sj);
        }
      }
    }
    Mat3<T> out = mat_cast<T>(val);
    for (int k = 0; k < N; ++k) {
      const Mat3<double>& P = frame.P[static_cast<std::size_t>(k)];
      Mat3<double> M;
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          if (i == j) {
            M(i, i) = tangent_of(g[i], k);
          } else {
            const double s = 0.5 * (P(i, j) + P(j, i));
            const double t = 0.5 * (P(i, j) - P(j, i));
            M(i, j) = s * coef_sym[i][j] + t * coef_skew[i][j];
          }
        }
      }
      const Mat3<double> dM = U * M * Rt;
      for (std::size_t e = 0; e < 9; ++e) out.m[e].tangent[static_cast<std::size_t>(k)] = dM.m[e];
    }
    return out;
  }
}

/// (sigma_j^b - sigma_i^b) / (sigma_j - sigma_i), accurate for close arguments.
inline double power_divided_difference(double si, double sj, double b) {
  if (si == sj) return b * std::pow(si, b - 1.0);
  const double gap = sj - si;
  return std::pow(si, b) * std::expm1(b * std::log1p(gap / si)) / gap;
}

/// (log sigma_j - log sigma_i) / (sigma_j - sigma_i), accurate for close arguments.
inline double log_divided_difference(double si, double sj) {
  if (si == sj) return 1.0 / si;
  const double gap = sj - si;
  return std::log1p(gap / si) / gap;
}

}  // namespace detail

/// Singular value decomposition of a 3x3 matrix with tangent propagation.
///
/// Tangents of U and V come from implicit differentiation of F = U S V^T;
/// singular-value gaps smaller than kSvdGapFloor are clamped to it.
template <class T>
Svd3<T> svd3(const Mat3<T>& m) {
  if (!all_finite(m)) throw ValidationError("svd3: non-finite input");
  if constexpr (tangent_count_v<T> == 0) {
    return detail::svd3_values(m);
  } else {
    constexpr int N = tangent_count_v<T>;
    const auto frame = detail::spectral_frame(m);
    const auto& sv = frame.svd;
    Svd3<T> out;
    out.U = mat_cast<T>(sv.U);
    out.V = mat_cast<T>(sv.V);
    out.sigma = frame.sigma();
    for (int k = 0; k < N; ++k) {
      const Mat3<double>& P = frame.P[static_cast<std::size_t>(k)];
      Mat3<double> wu, wv;
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) {
          const double si = sv.sigma[i], sj = sv.sigma[j];
          const double denom = detail::clamp_gap(sj - si) * (sj + si);
          const double a = (sj * P(i, j) + si * P(j, i)) / denom;
          const double b = (si * P(i, j) + sj * P(j, i)) / denom;
          wu(i, j) = a;
          wu(j, i) = -a;
          wv(i, j) = b;
          wv(j, i) = -b;
        }
      }
      const Mat3<double> dU = sv.U * wu;
      const Mat3<double> dV = sv.V * wv;
      for (std::size_t e = 0; e < 9; ++e) {
        out.U.m[e].tangent[static_cast<std::size_t>(k)] = dU.m[e];
        out.V.m[e].tangent[static_cast<std::size_t>(k)] = dV.m[e];
      }
    }
    return out;
  }
}

/// Rotation factor R = U V^T of the polar decomposition m = R S.
template <class T>
Mat3<T> polar_rotation(const Mat3<T>& m) {
  if (!all_finite(m)) throw ValidationError("polar_rotation: non-finite input");
  if (!(determinant(values_of(m)) > 0.0)) throw InvertedElementError("polar_rotation: det(F) <= 0");
  const auto frame = detail::spectral_frame(m);
  const Vec3<T> ones = Vec3<T>::constant(T(1.0));
  return detail::spectral_assemble(frame, ones, [](std::size_t, std::size_t) { return 0.0; }, true);
}

}  // namespace mpmflow
