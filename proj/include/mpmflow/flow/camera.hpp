#pragma once

#include <cmath>
#include <optional>

#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"

namespace mpmflow {

/// Pinhole camera. Image origin is the top-left corner, +x right, +y down,
/// principal point at the image center.
struct Camera {
  Vec3<double> position{0.5, 0.5, 2.5};
  Vec3<double> forward{0.0, 0.0, -1.0};
  Vec3<double> up{0.0, 1.0, 0.0};
  double focal = 150.0;  ///< pixels
  int width = 128;
  int height = 128;

  void validate() const {
    if (!(focal > 0.0)) throw ValidationError("camera.focal: must be positive");
    if (width < 16 || height < 16) throw ValidationError("camera: width and height must be at least 16 px");
    if (!(norm(forward) > 0.0)) throw ValidationError("camera.forward: must be non-zero");
    if (!(norm(cross(forward, up)) > 1e-12 * norm(forward) * norm(up)))
      throw ValidationError("camera.up: must not be parallel to forward");
  }

  /// Orthonormal camera basis (right, up, forward) with up corrected to be perpendicular to forward.
  struct Basis {
    Vec3<double> right, up, forward;
  };
  Basis basis() const {
    const Vec3<double> f = normalized(forward);
    const Vec3<double> r = normalized(cross(f, up));
    return {r, cross(r, f), f};
  }
};

/// Minimum depth for a point to count as in front of the camera.
inline constexpr double kMinDepth = 1e-6;

template <class T>
struct Projection {
  T px;
  T py;
  T depth;
};

/// Projects a world point to pixel coordinates; std::nullopt when behind the camera.
template <class T>
std::optional<Projection<T>> project(const Vec3<T>& x, const Camera& cam) {
  const auto b = cam.basis();
  const Vec3<T> rel = x - vec_cast<T>(cam.position);
  const T z = dot(rel, vec_cast<T>(b.forward));
  if (!(z > kMinDepth)) return std::nullopt;
  const T xc = dot(rel, vec_cast<T>(b.right));
  const T yc = dot(rel, vec_cast<T>(b.up));
  const T inv_z = 1.0 / z;
  return Projection<T>{0.5 * cam.width + cam.focal * xc * inv_z, 0.5 * cam.height - cam.focal * yc * inv_z, z};
}

}  // namespace mpmflow
