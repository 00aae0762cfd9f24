#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpmflow/constitutive/models.hpp"
#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"
#include "mpmflow/core/parallel.hpp"
#include "mpmflow/engine/config.hpp"
#include "mpmflow/engine/grid.hpp"

namespace mpmflow {

/// Lagrangian material sample.
template <class T>
struct Particle {
  std::int64_t id = 0;
  Vec3<T> x;
  Vec3<T> v;
  Mat3<T> F = Mat3<T>::identity();  ///< elastic deformation gradient
  Mat3<T> C = Mat3<T>::zero();      ///< affine velocity matrix
  double mass = 0.0;
  double volume0 = 0.0;
  int material_id = 0;
};

template <class T>
struct SimState {
  std::vector<Particle<T>> particles;
  std::vector<MaterialModel<T>> materials;
  double time = 0.0;
  std::int64_t step = 0;

  double total_mass() const {
    double m = 0.0;
    for (const auto& p : particles) m += p.mass;
    return m;
  }
  Vec3<T> total_momentum() const {
    Vec3<T> s{};
    for (const auto& p : particles) s += p.v * T(p.mass);
    return s;
  }
};

/// Relative floor under which a node counts as empty during the grid update.
inline constexpr double kMassFloor = 1e-12;

/// Particle to grid: mass, APIC momentum and the MLS-MPM fused stress impulse.
/// Particles [begin, end) scatter into `grid`, which must be cleared by the caller.
template <class T>
void p2g(const SimState<T>& state, SimGrid<T>& grid, const SimConfig& config, std::size_t begin, std::size_t end) {
  const double dx = config.grid.dx;
  const double inv_dx2 = 1.0 / (dx * dx);
  for (std::size_t pi = begin; pi < end; ++pi) {
    const Particle<T>& p = state.particles[pi];
    const auto& mat = state.materials[static_cast<std::size_t>(p.material_id)];
    const Stencil<T> s = bspline_weights(p.x, config.grid);
    const Mat3<T> tau = kirchhoff_stress(mat.kind, mat.params, p.F, p.C);
    // affine = -dt V0 (4 / dx^2) tau + m C, applied to (x_i - x_p).
    const Mat3<T> affine = tau * T(-config.dt * p.volume0 * 4.0 * inv_dx2) + p.C * T(p.mass);
    // affine * dpos is linear in the stencil offset: mv - dx A frac + dx (i a0 + j a1 + k a2).
    const Vec3<T> a0 = affine.column(0) * T(dx), a1 = affine.column(1) * T(dx), a2 = affine.column(2) * T(dx);
    const Vec3<T> q0 = p.v * T(p.mass) - a0 * s.frac[0] - a1 * s.frac[1] - a2 * s.frac[2];
    for (int i = 0; i < 3; ++i) {
      const Vec3<T> qi = q0 + a0 * T(double(i));
      for (int j = 0; j < 3; ++j) {
        const Vec3<T> qij = qi + a1 * T(double(j));
        const T wij = s.weights[0][i] * s.weights[1][j];
        for (int k = 0; k < 3; ++k) {
          const T w = wij * s.weights[2][k];
          const std::size_t idx = grid.index(s.base[0] + i, s.base[1] + j, s.base[2] + k);
          grid.touch(idx);
          grid.mass(idx) += w * p.mass;
          grid.momentum(idx) += (qij + a2 * T(double(k))) * w;
        }
      }
    }
  }
}

template <class T>
void p2g(const SimState<T>& state, SimGrid<T>& grid, const SimConfig& config) {
  p2g(state, grid, config, 0, state.particles.size());
}

namespace detail {

template <class T>
T norm_or_zero(const Vec3<T>& a) {
  const T sq = dot(a, a);
  if (!(sq > 0.0)) return T(0.0);
  return sqrt(sq);
}

template <class T>
void apply_slip(Vec3<T>& v, const Vec3<double>& n, double friction) {
  const T vn = dot(v, vec_cast<T>(n));
  if (!(vn < 0.0)) return;
  Vec3<T> vt = v - vec_cast<T>(n) * vn;
  if (friction > 0.0) {
    const T vt_norm = norm_or_zero(vt);
    const T loss = -vn * friction;
    if (!(vt_norm > loss)) {
      v = Vec3<T>{};
      return;
    }
    vt *= (1.0 - loss / vt_norm);
  }
  v = vt;
}

}  // namespace detail

/// Grid momentum update: velocities from momentum, gravity, external forces, boundaries.
template <class T>
void grid_update(SimGrid<T>& grid, const SimConfig& config, double t, std::int64_t step) {
  (void)t;
  const auto& active = grid.active_nodes();
  double max_mass = 0.0;
  for (auto idx : active) max_mass = std::max(max_mass, value_of(grid.mass(idx)));
  const double floor = kMassFloor * max_mass;
  const T dt(config.dt);

  for (auto idx : active) {
    const T& m = grid.mass(idx);
    if (m > floor) {
      grid.velocity(idx) = grid.momentum(idx) / m;
      grid.velocity(idx) += vec_cast<T>(config.gravity) * dt;
    } else {
      grid.velocity(idx) = Vec3<T>{};
    }
  }

  for (const auto& f : config.forces) {
    if (!f.active_at(step, config.dt)) continue;
    if (f.kind == ForceKind::Gravity) {
      const Vec3<T> dv = vec_cast<T>(f.vector) * dt;
      for (auto idx : active)
        if (grid.mass(idx) > floor && f.region.contains(grid.node_position(idx))) grid.velocity(idx) += dv;
    } else {
      T region_mass(0.0);
      for (auto idx : active)
        if (grid.mass(idx) > floor && f.region.contains(grid.node_position(idx))) region_mass += grid.mass(idx);
      if (!(region_mass > 0.0)) continue;
      const auto [first, count] = f.active_steps(config.dt);
      (void)first;
      const Vec3<T> dv = vec_cast<T>(f.vector) / (region_mass * double(count));
      for (auto idx : active)
        if (grid.mass(idx) > floor && f.region.contains(grid.node_position(idx))) grid.velocity(idx) += dv;
    }
  }

  if (config.boundaries.empty()) return;
  const auto& res = config.grid.resolution;
  for (auto idx : active) {
    Vec3<T>& v = grid.velocity(idx);
    for (const auto& b : config.boundaries) {
      switch (b.kind) {
        case BoundaryKind::BoxWalls: {
          const auto c = grid.coords(idx);
          for (std::size_t a = 0; a < 3; ++a) {
            Vec3<double> n{};
            if (c[a] < b.thickness) {
              n[a] = 1.0;
            } else if (c[a] > res[a] - 1 - b.thickness) {
              n[a] = -1.0;
            } else {
              continue;
            }
            if (b.sticky) {
              v = Vec3<T>{};
            } else {
              detail::apply_slip(v, n, b.friction);
            }
          }
          break;
        }
        case BoundaryKind::SlipPlane:
        case BoundaryKind::StickyPlane: {
          const Vec3<double> n = normalized(b.normal);
          if (dot(grid.node_position(idx) - b.point, n) > 0.0) break;
          if (b.kind == BoundaryKind::StickyPlane) {
            v = Vec3<T>{};
          } else {
            detail::apply_slip(v, n, b.friction);
          }
          break;
        }
      }
    }
  }
}

/// Grid to particle: velocity and affine matrix gather, advection, F update and return mapping.
template <class T>
void g2p_advect(SimState<T>& state, const SimGrid<T>& grid, const SimConfig& config, std::size_t begin,
                std::size_t end) {
  const double dx = config.grid.dx;
  const double inv_dx = 1.0 / dx;
  const T dt(config.dt);
  for (std::size_t pi = begin; pi < end; ++pi) {
    Particle<T>& p = state.particles[pi];
    const auto& mat = state.materials[static_cast<std::size_t>(p.material_id)];
    const Stencil<T> s = bspline_weights(p.x, config.grid);
    // B = sum w v_i (node - frac)^T, accumulated per axis as sum w v_i * index minus v frac^T.
    Vec3<T> v{};
    std::array<Vec3<T>, 3> by{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const T wij = s.weights[0][i] * s.weights[1][j];
        for (int k = 0; k < 3; ++k) {
          const T w = wij * s.weights[2][k];
          const Vec3<T> wv = grid.velocity(grid.index(s.base[0] + i, s.base[1] + j, s.base[2] + k)) * w;
          v += wv;
          if (i) by[0] += wv * T(double(i));
          if (j) by[1] += wv * T(double(j));
          if (k) by[2] += wv * T(double(k));
        }
      }
    }
    Mat3<T> B;
    for (std::size_t a = 0; a < 3; ++a) B.set_column(a, by[a] - v * s.frac[a]);
    // C = (4 / dx^2) sum w v_i (x_i - x_p)^T with offsets measured in cells.
    p.v = v;
    p.C = B * T(4.0 * inv_dx);
    p.x += v * dt;
    const Mat3<T> F_trial = (Mat3<T>::identity() + p.C * dt) * p.F;
    if (!all_finite(F_trial) || !all_finite(p.x) || !(determinant(values_of(F_trial)) > 0.0)) {
      std::ostringstream os;
      os << "simulation blow-up: particle " << p.id << " inverted or non-finite at step " << state.step + 1;
      throw SimulationBlowUp(os.str());
    }
    try {
      p.F = return_map(mat.kind, mat.params, F_trial, config.dt);
    } catch (const InvertedElementError& e) {
      std::ostringstream os;
      os << "simulation blow-up: particle " << p.id << " at step " << state.step + 1 << ": " << e.what();
      throw SimulationBlowUp(os.str());
    }
  }
}

template <class T>
void g2p_advect(SimState<T>& state, const SimGrid<T>& grid, const SimConfig& config) {
  g2p_advect(state, grid, config, 0, state.particles.size());
}

/// Owns the grid workspace and advances a SimState one step at a time.
///
/// Reference mode (threads == 0) is single-threaded. Parallel mode scatters
/// contiguous particle chunks into private grids merged in chunk order, so
/// results are deterministic for a fixed thread count.
template <class T>
class Stepper {
 public:
  using WarningSink = std::function<void(const std::string&)>;

  explicit Stepper(SimConfig config, WarningSink warn = nullptr) : config_(std::move(config)), grid_(config_.grid) {
    config_.validate();
    warn_ = warn ? std::move(warn) : [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
    if (config_.threads > 1)
      for (int t = 0; t < config_.threads; ++t) locals_.emplace_back(config_.grid);
  }

  const SimConfig& config() const { return config_; }
  const SimGrid<T>& grid() const { return grid_; }

  void step(SimState<T>& state) {
    grid_.clear();
    const std::size_t n = state.particles.size();
    if (locals_.empty()) {
      p2g(state, grid_, config_);
    } else {
      parallel_chunks(n, config_.threads, [&](std::size_t c, std::size_t b, std::size_t e) {
        locals_[c].clear();
        p2g(state, locals_[c], config_, b, e);
      });
      for (auto& local : locals_) grid_.accumulate(local);
    }

    grid_update(grid_, config_, state.time, state.step);

    if (locals_.empty()) {
      g2p_advect(state, grid_, config_);
    } else {
      parallel_chunks(n, config_.threads,
                      [&](std::size_t, std::size_t b, std::size_t e) { g2p_advect(state, grid_, config_, b, e); });
    }
    state.step += 1;
    state.time = static_cast<double>(state.step) * config_.dt;
    check_cfl(state);
  }

 private:
  void check_cfl(const SimState<T>& state) {
    if (cfl_warned_) return;
    double vmax = 0.0;
    for (const auto& p : state.particles) vmax = std::max(vmax, norm(values_of(p.v)));
    if (config_.dt * vmax >= config_.grid.dx) {
      cfl_warned_ = true;
      std::ostringstream os;
      os << "CFL condition violated at step " << state.step << ": dt * v_max = " << config_.dt * vmax
         << " >= dx = " << config_.grid.dx;
      warn_(os.str());
    }
  }

  SimConfig config_;
  SimGrid<T> grid_;
  std::vector<SimGrid<T>> locals_;
  WarningSink warn_;
  bool cfl_warned_ = false;
};

/// Advances the state by one step with a fresh workspace.
template <class T>
void step(SimState<T>& state, const SimConfig& config) {
  Stepper<T> stepper(config);
  stepper.step(state);
}

/// Runs config.n_steps steps, calling `sink` with the initial state, every
/// output_stride steps, and after the final step. Returns the number of snapshots emitted.
template <class T>
std::int64_t run(SimState<T>& state, const SimConfig& config, const std::function<void(const SimState<T>&)>& sink,
                 typename Stepper<T>::WarningSink warn = nullptr) {
  Stepper<T> stepper(config, std::move(warn));
  std::int64_t emitted = 0;
  auto emit = [&] {
    if (sink) sink(state);
    ++emitted;
  };
  emit();
  for (std::int64_t k = 1; k <= config.n_steps; ++k) {
    stepper.step(state);
    if (k % config.output_stride == 0 || k == config.n_steps) emit();
  }
  return emitted;
}

/// Number of snapshots run() emits for a step count and stride.
inline std::int64_t snapshot_count(std::int64_t n_steps, std::int64_t stride) {
  return 1 + n_steps / stride + (n_steps % stride != 0 ? 1 : 0);
}

}  // namespace mpmflow
