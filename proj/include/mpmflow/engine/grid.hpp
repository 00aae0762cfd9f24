#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"
#include "mpmflow/engine/config.hpp"

namespace mpmflow {

/// Quadratic B-spline stencil of one particle: 3 nodes per axis starting at `base`.
template <class T>
struct Stencil {
  std::array<int, 3> base{};
  /// weights[axis][offset]
  std::array<std::array<T, 3>, 3> weights{};
  /// Particle position relative to the base node, in cells.
  Vec3<T> frac;

  T weight(int i, int j, int k) const { return weights[0][i] * weights[1][j] * weights[2][k]; }
  /// (x_node - x_particle) / dx for stencil offset (i, j, k).
  Vec3<T> offset(int i, int j, int k) const {
    return Vec3<T>{T(double(i)) - frac[0], T(double(j)) - frac[1], T(double(k)) - frac[2]};
  }
};

/// Quadratic B-spline weights of the 3x3x3 nodes around x.
/// Throws OutOfDomainError when the stencil would leave the grid.
template <class T>
Stencil<T> bspline_weights(const Vec3<T>& x, const GridSpec& grid) {
  Stencil<T> s;
  const double inv_dx = 1.0 / grid.dx;
  for (std::size_t a = 0; a < 3; ++a) {
    const T fx = (x[a] - grid.origin[a]) * inv_dx;
    const double fv = value_of(fx);
    if (!std::isfinite(fv)) throw OutOfDomainError("bspline_weights: non-finite position");
    const int base = static_cast<int>(std::floor(fv - 0.5));
    if (base < 0 || base + 2 > grid.resolution[a] - 1) {
      std::ostringstream os;
      os << "bspline_weights: position " << value_of(x[0]) << "," << value_of(x[1]) << "," << value_of(x[2])
         << " is outside the grid interior";
      throw OutOfDomainError(os.str());
    }
    s.base[a] = base;
    const T f = fx - double(base);
    s.frac[a] = f;
    const T d0 = 1.5 - f, d1 = f - 1.0, d2 = f - 0.5;
    s.weights[a][0] = 0.5 * d0 * d0;
    s.weights[a][1] = 0.75 - d1 * d1;
    s.weights[a][2] = 0.5 * d2 * d2;
  }
  return s;
}

/// Eulerian background grid: per-node mass, momentum and velocity.
///
/// Only nodes touched since the last clear() are stored as active, so
/// clearing and updating cost scales with the particle footprint.
template <class T>
class SimGrid {
 public:
  explicit SimGrid(GridSpec spec)
      : spec_(spec),
        mass_(spec.node_count()),
        momentum_(spec.node_count()),
        velocity_(spec.node_count()),
        touched_(spec.node_count(), 0) {
    spec_.validate();
  }

  const GridSpec& spec() const { return spec_; }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(spec_.resolution[1]) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(spec_.resolution[2]) +
           static_cast<std::size_t>(k);
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const auto nz = static_cast<std::size_t>(spec_.resolution[2]);
    const auto ny = static_cast<std::size_t>(spec_.resolution[1]);
    return {static_cast<int>(idx / (ny * nz)), static_cast<int>((idx / nz) % ny), static_cast<int>(idx % nz)};
  }
  Vec3<double> node_position(std::size_t idx) const {
    const auto c = coords(idx);
    return spec_.origin + Vec3<double>{c[0] * spec_.dx, c[1] * spec_.dx, c[2] * spec_.dx};
  }

  void clear() {
    for (auto idx : active_) {
      mass_[idx] = T(0.0);
      momentum_[idx] = Vec3<T>{};
      velocity_[idx] = Vec3<T>{};
      touched_[idx] = 0;
    }
    active_.clear();
  }

  void touch(std::size_t idx) {
    if (!touched_[idx]) {
      touched_[idx] = 1;
      active_.push_back(idx);
    }
  }

  /// Adds another grid's accumulated mass and momentum, node by node in its active order.
  void accumulate(const SimGrid& other) {
    for (auto idx : other.active_) {
      touch(idx);
      mass_[idx] += other.mass_[idx];
      momentum_[idx] += other.momentum_[idx];
    }
  }

  const std::vector<std::size_t>& active_nodes() const { return active_; }

  T& mass(std::size_t idx) { return mass_[idx]; }
  const T& mass(std::size_t idx) const { return mass_[idx]; }
  Vec3<T>& momentum(std::size_t idx) { return momentum_[idx]; }
  const Vec3<T>& momentum(std::size_t idx) const { return momentum_[idx]; }
  Vec3<T>& velocity(std::size_t idx) { return velocity_[idx]; }
  const Vec3<T>& velocity(std::size_t idx) const { return velocity_[idx]; }

  T total_mass() const {
    T s(0.0);
    for (auto idx : active_) s += mass_[idx];
    return s;
  }
  Vec3<T> total_momentum() const {
    Vec3<T> s{};
    for (auto idx : active_) s += momentum_[idx];
    return s;
  }

 private:
  GridSpec spec_;
  std::vector<T> mass_;
  std::vector<Vec3<T>> momentum_;
  std::vector<Vec3<T>> velocity_;
  std::vector<std::uint8_t> touched_;
  std::vector<std::size_t> active_;
};

}  // namespace mpmflow
