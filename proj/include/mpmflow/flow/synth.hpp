#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mpmflow/core/error.hpp"
#include "mpmflow/engine/snapshot.hpp"
#include "mpmflow/flow/camera.hpp"
#include "mpmflow/flow/flow_field.hpp"

namespace mpmflow {

struct SplatSettings {
  double radius = 1.5;               ///< pixels; Gaussian sigma is radius / 2
  double depth_band_fraction = 0.02;  ///< of the frame's depth range
};

/// Optional per-pixel record of which particles contributed, used to check
/// that a perturbation did not change the rasterization pattern.
struct SplatFootprint {
  std::vector<std::uint32_t> contributors;  ///< count per pixel
  std::uint64_t hash = 0;                   ///< order-sensitive hash of (pixel, particle) pairs

  friend bool operator==(const SplatFootprint&, const SplatFootprint&) = default;
};

/// Dense image-plane flow between two snapshots of the same particles.
///
/// Every particle visible in both frames splats its projected displacement
/// onto the pixels whose centers lie within `radius` of its projection in
/// frame a, with Gaussian weights. At each pixel only particles within the
/// depth band of the nearest covering particle contribute; the pixel value is
/// their weighted mean. Pixels nobody covers are invalid.
template <class T>
FlowField<T> synth_flow(const Snapshot<T>& a, const Snapshot<T>& b, const Camera& cam,
                        const SplatSettings& splat = {}, SplatFootprint* footprint = nullptr) {
  if (a.size() != b.size()) throw ValidationError("synth_flow: snapshots have different particle counts");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.ids[i] != b.ids[i]) throw ValidationError("synth_flow: particle id mismatch between snapshots");
  if (!(splat.radius > 0.0)) throw ValidationError("synth_flow: splat radius must be positive");

  const int W = cam.width, H = cam.height;
  FlowField<T> out(W, H);

  struct Splat {
    Projection<T> pa;
    T du, dv;
  };
  std::vector<std::optional<Splat>> splats(a.size());
  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto pa = project(a.x[i], cam);
    const auto pb = project(b.x[i], cam);
    if (!pa || !pb) continue;
    splats[i] = Splat{*pa, pb->px - pa->px, pb->py - pa->py};
    dmin = std::min(dmin, value_of(pa->depth));
    dmax = std::max(dmax, value_of(pa->depth));
  }
  const double band = dmax > dmin ? splat.depth_band_fraction * (dmax - dmin) : 0.0;
  const double r = splat.radius, r2 = r * r;
  const double inv_two_s2 = 1.0 / (2.0 * (0.5 * r) * (0.5 * r));

  auto for_each_pixel = [&](const Projection<T>& p, auto&& fn) {
    const double cx = value_of(p.px), cy = value_of(p.py);
    const int x0 = std::max(0, static_cast<int>(std::ceil(cx - r - 0.5)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(cx + r - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(cy - r - 0.5)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(cy + r - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double ddx = (x + 0.5) - cx, ddy = (y + 0.5) - cy;
        if (ddx * ddx + ddy * ddy <= r2) fn(x, y);
      }
    }
  };

  std::vector<double> nearest(out.size(), std::numeric_limits<double>::infinity());
  for (const auto& s : splats) {
    if (!s) continue;
    const double d = value_of(s->pa.depth);
    for_each_pixel(s->pa, [&](int x, int y) {
      double& n = nearest[out.index(x, y)];
      n = std::min(n, d);
    });
  }

  std::vector<T> wsum(out.size(), T(0.0));
  if (footprint) {
    footprint->contributors.assign(out.size(), 0);
    footprint->hash = 1469598103934665603ull;
  }
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const auto& s = splats[i];
    if (!s) continue;
    const double d = value_of(s->pa.depth);
    for_each_pixel(s->pa, [&](int x, int y) {
      const std::size_t idx = out.index(x, y);
      if (d > nearest[idx] + band) return;
      const T ex = (x + 0.5) - s->pa.px, ey = (y + 0.5) - s->pa.py;
      const T w = exp(-(ex * ex + ey * ey) * inv_two_s2);
      wsum[idx] += w;
      out.u[idx] += w * s->du;
      out.v[idx] += w * s->dv;
      out.valid[idx] = 1;
      if (footprint) {
        footprint->contributors[idx] += 1;
        footprint->hash = (footprint->hash ^ (idx * 1000003ull + i)) * 1099511628211ull;
      }
    });
  }
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    if (!out.valid[idx]) continue;
    out.u[idx] /= wsum[idx];
    out.v[idx] /= wsum[idx];
  }
  return out;
}

/// Flow loss: sum over frames and jointly valid pixels of the squared endpoint difference.
template <class T>
struct FlowLoss {
  T value{0.0};
  std::size_t valid_pixels = 0;
  /// Set when some frame pair had no jointly valid pixel.
  bool degenerate_overlap = false;
};

/// Adds one frame pair's contribution to an accumulating loss.
template <class T>
void accumulate_flow_loss(FlowLoss<T>& acc, const FlowField<double>& observed, const FlowField<T>& simulated) {
  if (!simulated.same_shape(observed.width, observed.height))
    throw ValidationError("flow_loss: flow field dimensions differ");
  std::size_t joint = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!observed.valid[i] || !simulated.valid[i]) continue;
    const T du = simulated.u[i] - observed.u[i];
    const T dv = simulated.v[i] - observed.v[i];
    acc.value += du * du + dv * dv;
    ++joint;
  }
  acc.valid_pixels += joint;
  if (joint == 0) acc.degenerate_overlap = true;
}

template <class T>
FlowLoss<T> flow_loss(const std::vector<FlowField<double>>& observed, const std::vector<FlowField<T>>& simulated) {
  if (observed.size() != simulated.size()) throw ValidationError("flow_loss: sequence lengths differ");
  FlowLoss<T> acc;
  for (std::size_t t = 0; t < observed.size(); ++t) accumulate_flow_loss(acc, observed[t], simulated[t]);
  return acc;
}

}  // namespace mpmflow
