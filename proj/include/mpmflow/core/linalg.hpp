#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>

#include "mpmflow/core/dual.hpp"

namespace mpmflow {

template <class T>
struct Vec3 {
  std::array<T, 3> c{};

  constexpr Vec3() = default;
  constexpr Vec3(T x, T y, T z) : c{x, y, z} {}
  static constexpr Vec3 constant(T s) { return {s, s, s}; }

  constexpr T& operator[](std::size_t i) { return c[i]; }
  constexpr const T& operator[](std::size_t i) const { return c[i]; }

  constexpr Vec3& operator+=(const Vec3& o) {
    for (std::size_t i = 0; i < 3; ++i) c[i] += o.c[i];
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    for (std::size_t i = 0; i < 3; ++i) c[i] -= o.c[i];
    return *this;
  }
  template <class S>
  constexpr Vec3& operator*=(const S& s) {
    for (std::size_t i = 0; i < 3; ++i) c[i] *= s;
    return *this;
  }
  template <class S>
  constexpr Vec3& operator/=(const S& s) {
    for (std::size_t i = 0; i < 3; ++i) c[i] /= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.c[0], -a.c[1], -a.c[2]}; }
  friend constexpr Vec3 operator*(Vec3 a, const T& s) { return a *= s; }
  friend constexpr Vec3 operator*(const T& s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(Vec3 a, const T& s) { return a /= s; }
  friend constexpr bool operator==(const Vec3& a, const Vec3& b) { return a.c == b.c; }
};

template <class T>
constexpr T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <class T>
constexpr Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

template <class T>
T norm(const Vec3<T>& a) {
  return sqrt(dot(a, a));
}

template <class T>
Vec3<T> normalized(const Vec3<T>& a) {
  return a / norm(a);
}

template <class T>
Vec3<double> values_of(const Vec3<T>& a) {
  return {value_of(a[0]), value_of(a[1]), value_of(a[2])};
}

template <class To, class From>
Vec3<To> vec_cast(const Vec3<From>& a) {
  return {scalar_cast<To>(a[0]), scalar_cast<To>(a[1]), scalar_cast<To>(a[2])};
}

/// Row-major 3x3 matrix.
template <class T>
struct Mat3 {
  std::array<T, 9> m{};

  constexpr Mat3() = default;
  constexpr Mat3(T a00, T a01, T a02, T a10, T a11, T a12, T a20, T a21, T a22)
      : m{a00, a01, a02, a10, a11, a12, a20, a21, a22} {}

  static constexpr Mat3 identity() { return diag(T(1), T(1), T(1)); }
  static constexpr Mat3 zero() { return Mat3{}; }
  static constexpr Mat3 diag(T a, T b, T c) {
    Mat3 r;
    r(0, 0) = a;
    r(1, 1) = b;
    r(2, 2) = c;
    return r;
  }
  static constexpr Mat3 diag(const Vec3<T>& d) { return diag(d[0], d[1], d[2]); }
  static constexpr Mat3 from_columns(const Vec3<T>& a, const Vec3<T>& b, const Vec3<T>& c) {
    return {a[0], b[0], c[0], a[1], b[1], c[1], a[2], b[2], c[2]};
  }

  constexpr T& operator()(std::size_t i, std::size_t j) { return m[3 * i + j]; }
  constexpr const T& operator()(std::size_t i, std::size_t j) const { return m[3 * i + j]; }

  constexpr Vec3<T> column(std::size_t j) const { return {m[j], m[3 + j], m[6 + j]}; }
  constexpr void set_column(std::size_t j, const Vec3<T>& v) {
    m[j] = v[0];
    m[3 + j] = v[1];
    m[6 + j] = v[2];
  }

  constexpr Mat3& operator+=(const Mat3& o) {
    for (std::size_t i = 0; i < 9; ++i) m[i] += o.m[i];
    return *this;
  }
  constexpr Mat3& operator-=(const Mat3& o) {
    for (std::size_t i = 0; i < 9; ++i) m[i] -= o.m[i];
    return *this;
  }
  template <class S>
  constexpr Mat3& operator*=(const S& s) {
    for (std::size_t i = 0; i < 9; ++i) m[i] *= s;
    return *this;
  }
  template <class S>
  constexpr Mat3& operator/=(const S& s) {
    for (std::size_t i = 0; i < 9; ++i) m[i] /= s;
    return *this;
  }

  friend constexpr Mat3 operator+(Mat3 a, const Mat3& b) { return a += b; }
  friend constexpr Mat3 operator-(Mat3 a, const Mat3& b) { return a -= b; }
  friend constexpr Mat3 operator-(Mat3 a) {
    for (auto& x : a.m) x = -x;
    return a;
  }
  friend constexpr Mat3 operator*(Mat3 a, const T& s) { return a *= s; }
  friend constexpr Mat3 operator*(const T& s, Mat3 a) { return a *= s; }
  friend constexpr Mat3 operator/(Mat3 a, const T& s) { return a /= s; }

  friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
  }
  friend constexpr Vec3<T> operator*(const Mat3& a, const Vec3<T>& v) {
    return {a(0, 0) * v[0] + a(0, 1) * v[1] + a(0, 2) * v[2],
            a(1, 0) * v[0] + a(1, 1) * v[1] + a(1, 2) * v[2],
            a(2, 0) * v[0] + a(2, 1) * v[1] + a(2, 2) * v[2]};
  }
  friend constexpr bool operator==(const Mat3& a, const Mat3& b) { return a.m == b.m; }

  friend std::ostream& operator<<(std::ostream& os, const Mat3& a) {
    os << "[";
    for (std::size_t i = 0; i < 3; ++i) {
      os << (i ? "; " : "");
      for (std::size_t j = 0; j < 3; ++j) os << (j ? " " : "") << value_of(a(i, j));
    }
    return os << "]";
  }
};

template <class T>
constexpr Mat3<T> transpose(const Mat3<T>& a) {
  return {a(0, 0), a(1, 0), a(2, 0), a(0, 1), a(1, 1), a(2, 1), a(0, 2), a(1, 2), a(2, 2)};
}

template <class T>
constexpr T trace(const Mat3<T>& a) {
  return a(0, 0) + a(1, 1) + a(2, 2);
}

template <class T>
constexpr T determinant(const Mat3<T>& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

template <class T>
constexpr Mat3<T> outer(const Vec3<T>& a, const Vec3<T>& b) {
  Mat3<T> r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = a[i] * b[j];
  return r;
}

template <class T>
constexpr Mat3<T> symmetric_part(const Mat3<T>& a) {
  return (a + transpose(a)) * T(0.5);
}

template <class T>
constexpr Mat3<T> deviatoric_part(const Mat3<T>& a) {
  return a - Mat3<T>::identity() * (trace(a) / 3.0);
}

template <class T>
T frobenius_norm(const Mat3<T>& a) {
  T s(0.0);
  for (const auto& x : a.m) s += x * x;
  return sqrt(s);
}

template <class T>
Mat3<double> values_of(const Mat3<T>& a) {
  Mat3<double> r;
  for (std::size_t i = 0; i < 9; ++i) r.m[i] = value_of(a.m[i]);
  return r;
}

/// Tangent slot `k` of every entry, as a plain matrix.
template <class T>
Mat3<double> tangent_matrix(const Mat3<T>& a, int k) {
  Mat3<double> r;
  for (std::size_t i = 0; i < 9; ++i) r.m[i] = tangent_of(a.m[i], k);
  return r;
}

template <class To, class From>
Mat3<To> mat_cast(const Mat3<From>& a) {
  Mat3<To> r;
  for (std::size_t i = 0; i < 9; ++i) r.m[i] = scalar_cast<To>(a.m[i]);
  return r;
}

template <class T>
bool all_finite(const Mat3<T>& a) {
  for (const auto& x : a.m)
    if (!isfinite(x)) return false;
  return true;
}

template <class T>
bool all_finite(const Vec3<T>& a) {
  return isfinite(a[0]) && isfinite(a[1]) && isfinite(a[2]);
}

}  // namespace mpmflow
