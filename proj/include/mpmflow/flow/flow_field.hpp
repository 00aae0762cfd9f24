#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mpmflow/core/dual.hpp"
#include "mpmflow/core/error.hpp"

namespace mpmflow {

/// Dense per-pixel displacement field with a validity mask.
/// Invalid pixels hold (0, 0) and are excluded from every loss.
template <class T>
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<T> u;
  std::vector<T> v;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        u(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), T(0.0)),
        v(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), T(0.0)),
        valid(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {
    if (w <= 0 || h <= 0) throw ValidationError("FlowField: dimensions must be positive");
  }

  std::size_t size() const { return u.size(); }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto m : valid) n += m ? 1 : 0;
    return n;
  }
  bool same_shape(int w, int h) const { return width == w && height == h; }
};

/// Drops tangents, keeping values and mask.
template <class T>
FlowField<double> flow_values(const FlowField<T>& f) {
  FlowField<double> r(f.width, f.height);
  for (std::size_t i = 0; i < f.size(); ++i) {
    r.u[i] = value_of(f.u[i]);
    r.v[i] = value_of(f.v[i]);
  }
  r.valid = f.valid;
  return r;
}

}  // namespace mpmflow
