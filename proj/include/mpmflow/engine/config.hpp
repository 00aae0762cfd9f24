#pragma once

#include <array>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"

namespace mpmflow {

/// Background grid layout. Node (i, j, k) sits at origin + (i, j, k) * dx.
struct GridSpec {
  std::array<int, 3> resolution{32, 32, 32};
  double dx = 1.0 / 32.0;
  Vec3<double> origin{0.0, 0.0, 0.0};

  std::size_t node_count() const {
    return static_cast<std::size_t>(resolution[0]) * static_cast<std::size_t>(resolution[1]) *
           static_cast<std::size_t>(resolution[2]);
  }
  Vec3<double> extent_min() const { return origin; }
  Vec3<double> extent_max() const {
    return origin + Vec3<double>{(resolution[0] - 1) * dx, (resolution[1] - 1) * dx, (resolution[2] - 1) * dx};
  }

  void validate() const {
    for (int n : resolution)
      if (n < 8) throw ValidationError("grid.resolution: every axis needs at least 8 nodes");
    if (!(dx > 0.0) || !std::isfinite(dx)) throw ValidationError("grid.dx: must be positive");
  }
};

struct Box {
  Vec3<double> min;
  Vec3<double> max;

  bool contains(const Vec3<double>& p) const {
    for (std::size_t a = 0; a < 3; ++a)
      if (p[a] < min[a] || p[a] > max[a]) return false;
    return true;
  }
  bool empty() const {
    for (std::size_t a = 0; a < 3; ++a)
      if (!(max[a] > min[a])) return true;
    return false;
  }
};

enum class ForceKind { Gravity, Impulse };

/// External load on the grid nodes inside `region` during [t_start, t_end].
/// Gravity adds `vector` [m/s^2] as an acceleration; an impulse delivers `vector` [N s]
/// of momentum, split evenly over the steps of its window.
struct ExternalForce {
  ForceKind kind = ForceKind::Gravity;
  Vec3<double> vector{};
  Box region;
  double t_start = 0.0;
  double t_end = 0.0;

  void validate() const {
    if (!(t_start <= t_end)) throw ValidationError("force.window: t_start must not exceed t_end");
    if (region.empty()) throw ValidationError("force.region: box is empty");
  }

  /// First step index and step count the force is active for.
  std::pair<std::int64_t, std::int64_t> active_steps(double dt) const {
    const auto first = static_cast<std::int64_t>(std::ceil(t_start / dt - 1e-9));
    const auto count = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((t_end - t_start) / dt - 1e-9)));
    return {first, count};
  }
  bool active_at(std::int64_t step, double dt) const {
    const auto [first, count] = active_steps(dt);
    return step >= first && step < first + count;
  }
};

enum class BoundaryKind { SlipPlane, StickyPlane, BoxWalls };

/// Grid boundary condition.
///
/// Planes act on nodes with (x - point) . normal <= 0. Box walls act on the
/// `thickness` outermost node layers of every face, as slip planes (or sticky when `sticky`).
struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::BoxWalls;
  Vec3<double> point{};
  Vec3<double> normal{0.0, 1.0, 0.0};
  double friction = 0.0;
  int thickness = 3;
  bool sticky = false;

  void validate(const GridSpec& grid) const {
    if (!(friction >= 0.0)) throw ValidationError("boundary.friction: must be non-negative");
    if (kind == BoundaryKind::BoxWalls) {
      if (thickness < 1) throw ValidationError("boundary.thickness: must be at least 1");
      return;
    }
    if (!(norm(normal) > 0.0)) throw ValidationError("boundary.normal: must be non-zero");
    const auto lo = grid.extent_min(), hi = grid.extent_max();
    for (std::size_t a = 0; a < 3; ++a)
      if (point[a] < lo[a] || point[a] > hi[a]) throw ValidationError("boundary.point: plane must lie inside the grid");
  }
};

struct SimConfig {
  double dt = 2e-4;
  std::int64_t n_steps = 600;
  Vec3<double> gravity{0.0, -9.8, 0.0};
  GridSpec grid;
  std::vector<BoundaryCondition> boundaries;
  std::vector<ExternalForce> forces;
  std::int64_t output_stride = 10;
  /// 0 selects the single-threaded reference mode.
  int threads = 0;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("sim.dt: must be positive");
    if (n_steps < 0) throw ValidationError("sim.n_steps: must be non-negative");
    if (output_stride < 1) throw ValidationError("sim.output_stride: must be at least 1");
    if (threads < 0) throw ValidationError("sim.threads: must be non-negative");
    grid.validate();
    for (const auto& b : boundaries) b.validate(grid);
    for (const auto& f : forces) f.validate();
  }
};

}  // namespace mpmflow
