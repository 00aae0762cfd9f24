#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <type_traits>

namespace mpmflow {

/// Forward-mode dual number with a fixed number of tangent slots.
///
/// Each slot carries the derivative of the value with respect to one
/// independent parameter. All arithmetic propagates tangents by the chain
/// rule; comparisons look at the value part only.
template <int N>
struct Dual {
  static_assert(N >= 0, "tangent count must be non-negative");

  double value = 0.0;
  std::array<double, N> tangent{};

  constexpr Dual() = default;
  constexpr Dual(double v) : value(v) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double v, const std::array<double, N>& t) : value(v), tangent(t) {}

  /// A variable seeded with a unit tangent in `slot`.
  static constexpr Dual variable(double v, int slot) {
    Dual d(v);
    d.tangent[static_cast<std::size_t>(slot)] = 1.0;
    return d;
  }

  constexpr Dual operator-() const {
    Dual r(-value);
    for (int i = 0; i < N; ++i) r.tangent[i] = -tangent[i];
    return r;
  }
  constexpr Dual operator+() const { return *this; }

  constexpr Dual& operator+=(const Dual& o) {
    value += o.value;
    for (int i = 0; i < N; ++i) tangent[i] += o.tangent[i];
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    value -= o.value;
    for (int i = 0; i < N; ++i) tangent[i] -= o.tangent[i];
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) tangent[i] = tangent[i] * o.value + value * o.tangent[i];
    value *= o.value;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.value;
    const double q = value * inv;
    for (int i = 0; i < N; ++i) tangent[i] = (tangent[i] - q * o.tangent[i]) * inv;
    value = q;
    return *this;
  }
  constexpr Dual& operator+=(double s) {
    value += s;
    return *this;
  }
  constexpr Dual& operator-=(double s) {
    value -= s;
    return *this;
  }
  constexpr Dual& operator*=(double s) {
    value *= s;
    for (int i = 0; i < N; ++i) tangent[i] *= s;
    return *this;
  }
  constexpr Dual& operator/=(double s) {
    value /= s;
    for (int i = 0; i < N; ++i) tangent[i] /= s;
    return *this;
  }

  friend constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend constexpr Dual operator/(Dual a, const Dual& b) { return a /= b; }
  friend constexpr Dual operator+(Dual a, double b) { return a += b; }
  friend constexpr Dual operator-(Dual a, double b) { return a -= b; }
  friend constexpr Dual operator*(Dual a, double b) { return a *= b; }
  friend constexpr Dual operator/(Dual a, double b) { return a /= b; }
  friend constexpr Dual operator+(double a, Dual b) { return b += a; }
  friend constexpr Dual operator-(double a, const Dual& b) {
    Dual r = -b;
    r.value += a;
    return r;
  }
  friend constexpr Dual operator*(double a, Dual b) { return b *= a; }
  friend constexpr Dual operator/(double a, const Dual& b) {
    const double inv = 1.0 / b.value;
    Dual r(a * inv);
    const double scale = -r.value * inv;
    for (int i = 0; i < N; ++i) r.tangent[i] = scale * b.tangent[i];
    return r;
  }

  friend constexpr bool operator<(const Dual& a, const Dual& b) { return a.value < b.value; }
  friend constexpr bool operator>(const Dual& a, const Dual& b) { return a.value > b.value; }
  friend constexpr bool operator<=(const Dual& a, const Dual& b) { return a.value <= b.value; }
  friend constexpr bool operator>=(const Dual& a, const Dual& b) { return a.value >= b.value; }
  friend constexpr bool operator<(const Dual& a, double b) { return a.value < b; }
  friend constexpr bool operator>(const Dual& a, double b) { return a.value > b; }
  friend constexpr bool operator<=(const Dual& a, double b) { return a.value <= b; }
  friend constexpr bool operator>=(const Dual& a, double b) { return a.value >= b; }
  friend constexpr bool operator<(double a, const Dual& b) { return a < b.value; }
  friend constexpr bool operator>(double a, const Dual& b) { return a > b.value; }
  friend constexpr bool operator<=(double a, const Dual& b) { return a <= b.value; }
  friend constexpr bool operator>=(double a, const Dual& b) { return a >= b.value; }

  friend std::ostream& operator<<(std::ostream& os, const Dual& d) {
    os << d.value << " [";
    for (int i = 0; i < N; ++i) os << (i ? ", " : "") << d.tangent[i];
    return os << "]";
  }

  // Elementary functions, found by argument-dependent lookup from generic code.

  /// f(value) with derivative df applied to every tangent slot.
  static constexpr Dual chain(double f, double df, const Dual& x) {
    Dual r(f);
    for (int i = 0; i < N; ++i) r.tangent[i] = df * x.tangent[i];
    return r;
  }

  friend Dual sqrt(const Dual& x) {
    const double s = std::sqrt(x.value);
    return chain(s, 0.5 / s, x);
  }
  friend Dual cbrt(const Dual& x) {
    const double c = std::cbrt(x.value);
    return chain(c, c / (3.0 * x.value), x);
  }
  friend Dual exp(const Dual& x) {
    const double e = std::exp(x.value);
    return chain(e, e, x);
  }
  friend Dual expm1(const Dual& x) { return chain(std::expm1(x.value), std::exp(x.value), x); }
  friend Dual log(const Dual& x) { return chain(std::log(x.value), 1.0 / x.value, x); }
  friend Dual log1p(const Dual& x) { return chain(std::log1p(x.value), 1.0 / (1.0 + x.value), x); }
  friend Dual sin(const Dual& x) { return chain(std::sin(x.value), std::cos(x.value), x); }
  friend Dual cos(const Dual& x) { return chain(std::cos(x.value), -std::sin(x.value), x); }
  friend Dual abs(const Dual& x) { return x.value < 0.0 ? -x : x; }
  friend Dual fabs(const Dual& x) { return abs(x); }
  friend Dual pow(const Dual& x, double p) {
    const double f = std::pow(x.value, p);
    return chain(f, p * std::pow(x.value, p - 1.0), x);
  }
  friend Dual pow(const Dual& x, const Dual& p) { return exp(p * log(x)); }
  friend bool isfinite(const Dual& x) {
    if (!std::isfinite(x.value)) return false;
    for (int i = 0; i < N; ++i)
      if (!std::isfinite(x.tangent[i])) return false;
    return true;
  }
};

template <class T>
struct is_dual : std::false_type {};
template <int N>
struct is_dual<Dual<N>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

/// Number of tangent slots carried by a scalar type (0 for plain reals).
template <class T>
struct tangent_count : std::integral_constant<int, 0> {};
template <int N>
struct tangent_count<Dual<N>> : std::integral_constant<int, N> {};
template <class T>
inline constexpr int tangent_count_v = tangent_count<T>::value;

constexpr double value_of(double x) { return x; }
template <int N>
constexpr double value_of(const Dual<N>& x) {
  return x.value;
}

constexpr double tangent_of(double, int) { return 0.0; }
template <int N>
constexpr double tangent_of(const Dual<N>& x, int slot) {
  return x.tangent[static_cast<std::size_t>(slot)];
}

/// Builds a scalar of type T from a value and a per-slot tangent accessor.
template <class T, class TangentFn>
constexpr T make_scalar(double value, TangentFn&& tangent) {
  if constexpr (is_dual_v<T>) {
    T r(value);
    for (int i = 0; i < tangent_count_v<T>; ++i) r.tangent[static_cast<std::size_t>(i)] = tangent(i);
    return r;
  } else {
    (void)tangent;
    return value;
  }
}

/// Converts between scalar types, keeping as many tangent slots as both share.
template <class To, class From>
constexpr To scalar_cast(const From& x) {
  if constexpr (std::is_same_v<To, From>) {
    return x;
  } else {
    return make_scalar<To>(value_of(x), [&](int k) {
      return k < tangent_count_v<From> ? tangent_of(x, k) : 0.0;
    });
  }
}

using std::abs;
using std::cbrt;
using std::cos;
using std::exp;
using std::expm1;
using std::isfinite;
using std::log;
using std::log1p;
using std::pow;
using std::sin;
using std::sqrt;

}  // namespace mpmflow
