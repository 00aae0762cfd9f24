#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mpmflow/constitutive/material.hpp"
#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"
#include "mpmflow/engine/config.hpp"
#include "mpmflow/engine/stepper.hpp"
#include "mpmflow/flow/camera.hpp"
#include "mpmflow/flow/synth.hpp"
#include "mpmflow/identify/prior.hpp"

namespace mpmflow {

struct BoxShape {
  Vec3<double> min;
  Vec3<double> max;
};

struct SphereShape {
  Vec3<double> center;
  double radius = 0.0;
};

/// Particles read from a text file (see load_point_cloud).
struct PointCloudShape {
  std::filesystem::path path;
};

using Shape = std::variant<BoxShape, SphereShape, PointCloudShape>;

struct BodySpec {
  Shape shape;
  std::string material;
  int ppc = 8;  ///< particles per cell
  Vec3<double> velocity{};
};

/// Everything needed to build a simulation: grid, time stepping, camera, materials and bodies.
struct SceneSpec {
  std::uint64_t seed = 0;
  SimConfig config;
  Camera camera;
  SplatSettings splat;
  /// Inline material definitions; the prior takes precedence for names it defines.
  MaterialPrior materials;
  std::vector<BodySpec> bodies;
  /// Directory relative point-cloud paths resolve against.
  std::filesystem::path base_dir;
};

struct SampledBody {
  std::vector<Vec3<double>> positions;
  std::vector<double> volumes;
};

struct PointCloud {
  std::vector<Vec3<double>> positions;
  /// Per-point volumes when the file carries a fourth column.
  std::optional<std::vector<double>> volumes;
};

/// Deterministic uniform doubles in [0, 1) from a 64-bit Mersenne twister,
/// identical on every platform.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

inline bool inside(const Shape& shape, const Vec3<double>& p) {
  if (const auto* b = std::get_if<BoxShape>(&shape)) {
    for (std::size_t a = 0; a < 3; ++a)
      if (p[a] < b->min[a] || p[a] >= b->max[a]) return false;
    return true;
  }
  if (const auto* s = std::get_if<SphereShape>(&shape)) {
    const Vec3<double> d = p - s->center;
    return dot(d, d) <= s->radius * s->radius;
  }
  return false;
}

inline Box bounds_of(const Shape& shape) {
  if (const auto* b = std::get_if<BoxShape>(&shape)) return {b->min, b->max};
  const auto& s = std::get<SphereShape>(shape);
  const Vec3<double> r = Vec3<double>::constant(s.radius);
  return {s.center - r, s.center + r};
}

/// Region where every particle keeps a full interpolation stencil inside the grid.
inline Box interior_of(const GridSpec& g) {
  const Vec3<double> lo = g.origin + Vec3<double>::constant(g.dx);
  const Vec3<double> hi = g.origin + Vec3<double>{(g.resolution[0] - 2) * g.dx, (g.resolution[1] - 2) * g.dx,
                                                  (g.resolution[2] - 2) * g.dx};
  return {lo, hi};
}

inline void require_inside_grid(const Box& b, const GridSpec& grid, const std::string& what) {
  const Box in = interior_of(grid);
  for (std::size_t a = 0; a < 3; ++a)
    if (b.min[a] < in.min[a] || b.max[a] > in.max[a])
      throw ValidationError(what + ": lies outside the grid interior (keep one cell clear of every face)");
}

}  // namespace detail

/// Jittered-lattice sampling of a primitive shape on the grid's cells.
///
/// A perfect-cube ppc = k^3 places one jittered sample in each of k^3 sub-cells;
/// any other ppc scatters ppc uniform samples per cell. Samples outside the shape
/// are dropped. Every particle gets volume dx^3 / ppc.
inline SampledBody sample_body(const Shape& shape, int ppc, const GridSpec& grid, SceneRng& rng) {
  if (ppc < 1) throw ValidationError("sample_body: ppc must be at least 1");
  if (std::holds_alternative<PointCloudShape>(shape))
    throw ValidationError("sample_body: point clouds are loaded, not sampled");
  const Box bounds = detail::bounds_of(shape);
  if (bounds.empty()) throw ValidationError("sample_body: shape is empty");
  detail::require_inside_grid(bounds, grid, "sample_body");

  const double dx = grid.dx;
  const int k = static_cast<int>(std::lround(std::cbrt(static_cast<double>(ppc))));
  const bool stratified = k * k * k == ppc;
  std::array<int, 3> c0{}, c1{};
  for (std::size_t a = 0; a < 3; ++a) {
    c0[a] = static_cast<int>(std::floor((bounds.min[a] - grid.origin[a]) / dx));
    c1[a] = static_cast<int>(std::ceil((bounds.max[a] - grid.origin[a]) / dx));
  }

  SampledBody out;
  const double vol = dx * dx * dx / ppc;
  for (int i = c0[0]; i < c1[0]; ++i) {
    for (int j = c0[1]; j < c1[1]; ++j) {
      for (int l = c0[2]; l < c1[2]; ++l) {
        const Vec3<double> corner = grid.origin + Vec3<double>{i * dx, j * dx, l * dx};
        for (int s = 0; s < ppc; ++s) {
          Vec3<double> p;
          if (stratified) {
            const int sx = s / (k * k), sy = (s / k) % k, sz = s % k;
            const double h = dx / k;
            p = corner + Vec3<double>{(sx + rng.uniform()) * h, (sy + rng.uniform()) * h, (sz + rng.uniform()) * h};
          } else {
            p = corner + Vec3<double>{rng.uniform() * dx, rng.uniform() * dx, rng.uniform() * dx};
          }
          if (detail::inside(shape, p)) {
            out.positions.push_back(p);
            out.volumes.push_back(vol);
          }
        }
      }
    }
  }
  if (out.positions.empty()) throw ValidationError("sample_body: shape produced no particles");
  return out;
}

/// Reads `x y z [volume]` per line; `#` starts a comment; blank lines are skipped.
inline PointCloud parse_point_cloud(std::istream& in, const std::string& name) {
  PointCloud pc;
  std::vector<double> vols;
  bool with_volume = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> nums;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v))
        throw FormatError(name + ":" + std::to_string(lineno) + ": malformed number '" + tok + "'");
      nums.push_back(v);
    }
    if (nums.empty()) continue;
    if (nums.size() != 3 && nums.size() != 4)
      throw FormatError(name + ":" + std::to_string(lineno) + ": expected 'x y z' or 'x y z volume'");
    const bool has_vol = nums.size() == 4;
    if (pc.positions.empty()) with_volume = has_vol;
    if (has_vol != with_volume)
      throw FormatError(name + ":" + std::to_string(lineno) + ": inconsistent column count");
    if (has_vol && !(nums[3] > 0.0))
      throw FormatError(name + ":" + std::to_string(lineno) + ": volume must be positive");
    pc.positions.push_back({nums[0], nums[1], nums[2]});
    if (has_vol) vols.push_back(nums[3]);
  }
  if (pc.positions.empty()) throw FormatError(name + ": point cloud is empty");
  if (with_volume) pc.volumes = std::move(vols);
  return pc;
}

inline PointCloud load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open point cloud " + path.string());
  return parse_point_cloud(in, path.string());
}

/// Per-point volume when the cloud carries none: bounding-box volume over
/// point count, each extent floored at one cell.
inline double point_cloud_volume(const PointCloud& pc, double dx) {
  Vec3<double> lo = pc.positions.front(), hi = lo;
  for (const auto& p : pc.positions)
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  double v = 1.0;
  for (std::size_t a = 0; a < 3; ++a) v *= std::max(hi[a] - lo[a], dx);
  return v / static_cast<double>(pc.positions.size());
}

/// Simulation-ready scene.
struct BuiltScene {
  SimState<double> state;
  SimConfig config;
  Camera camera;
  SplatSettings splat;
  std::vector<std::string> material_names;  ///< indexed by Particle::material_id
  std::uint64_t seed = 0;

  int material_index(const std::string& name) const {
    for (std::size_t i = 0; i < material_names.size(); ++i)
      if (material_names[i] == name) return static_cast<int>(i);
    return -1;
  }
};

/// Samples every body, binds materials from the prior (falling back to the
/// scene's inline table) and assembles the initial state.
inline BuiltScene build_scene(const SceneSpec& spec, const MaterialPrior& prior) {
  spec.config.validate();
  spec.camera.validate();
  if (spec.bodies.empty()) throw ValidationError("scene.bodies: at least one body is required");

  BuiltScene out;
  out.config = spec.config;
  out.camera = spec.camera;
  out.splat = spec.splat;
  out.seed = spec.seed;
  SceneRng rng(spec.seed);

  for (std::size_t bi = 0; bi < spec.bodies.size(); ++bi) {
    const BodySpec& body = spec.bodies[bi];
    const std::string where = "scene.bodies[" + std::to_string(bi) + "]";
    int mid = out.material_index(body.material);
    if (mid < 0) {
      const MaterialModel<double>* model = nullptr;
      if (auto it = prior.find(body.material); it != prior.end()) {
        model = &it->second;
      } else if (auto it2 = spec.materials.find(body.material); it2 != spec.materials.end()) {
        model = &it2->second;
      }
      if (!model) throw ValidationError(where + ".material: unknown material '" + body.material + "'");
      validate_model(*model, "material." + body.material);
      out.material_names.push_back(body.material);
      out.state.materials.push_back(*model);
      mid = static_cast<int>(out.material_names.size() - 1);
    }

    SampledBody sampled;
    if (const auto* pcs = std::get_if<PointCloudShape>(&body.shape)) {
      const auto path = pcs->path.is_absolute() ? pcs->path : spec.base_dir / pcs->path;
      PointCloud pc = load_point_cloud(path);
      Box bb{pc.positions.front(), pc.positions.front()};
      for (const auto& p : pc.positions)
        for (std::size_t a = 0; a < 3; ++a) {
          bb.min[a] = std::min(bb.min[a], p[a]);
          bb.max[a] = std::max(bb.max[a], p[a]);
        }
      detail::require_inside_grid(bb, spec.config.grid, where);
      sampled.positions = pc.positions;
      sampled.volumes = pc.volumes ? *pc.volumes
                                   : std::vector<double>(pc.positions.size(),
                                                         point_cloud_volume(pc, spec.config.grid.dx));
    } else {
      try {
        sampled = sample_body(body.shape, body.ppc, spec.config.grid, rng);
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
    }

    const double density = out.state.materials[static_cast<std::size_t>(mid)].density;
    for (std::size_t i = 0; i < sampled.positions.size(); ++i) {
      Particle<double> p;
      p.id = static_cast<std::int64_t>(out.state.particles.size());
      p.x = sampled.positions[i];
      p.v = body.velocity;
      p.volume0 = sampled.volumes[i];
      p.mass = density * p.volume0;
      p.material_id = mid;
      out.state.particles.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene file (JSON)

namespace detail {

inline Vec3<double> json_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(path + ": expected [x, y, z]");
  return {json_number(j[0], path + "[0]"), json_number(j[1], path + "[1]"), json_number(j[2], path + "[2]")};
}

inline ordered_json vec3_json(const Vec3<double>& v) { return ordered_json::array({v[0], v[1], v[2]}); }

inline Box json_box(const json& j, const std::string& path) {
  return {json_vec3(json_member(j, "min", path), path + ".min"), json_vec3(json_member(j, "max", path), path + ".max")};
}

template <class V>
V json_or(const json& j, const char* key, V fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<V>();
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return json_number(j.at(key), path + "." + key);
}

}  // namespace detail

/// Parses a scene description. Units: meters, seconds, kilograms, pixels.
inline SceneSpec scene_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  if (!j.is_object()) throw ValidationError("scene: expected an object");
  SceneSpec s;
  s.base_dir = base_dir;
  try {
    s.seed = json_or<std::uint64_t>(j, "seed", 0);
  } catch (const json::exception&) {
    throw ValidationError("scene.seed: expected a non-negative integer");
  }

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (g.contains("resolution")) {
      const json& r = g.at("resolution");
      if (!r.is_array() || r.size() != 3) throw ValidationError("scene.grid.resolution: expected [nx, ny, nz]");
      for (std::size_t a = 0; a < 3; ++a) {
        if (!r[a].is_number_integer()) throw ValidationError("scene.grid.resolution: expected integers");
        s.config.grid.resolution[a] = r[a].get<int>();
      }
    }
    s.config.grid.dx = number_or(g, "dx", 1.0 / s.config.grid.resolution[0], "scene.grid");
    if (g.contains("origin")) s.config.grid.origin = json_vec3(g.at("origin"), "scene.grid.origin");
  }

  if (j.contains("sim")) {
    const json& m = j.at("sim");
    s.config.dt = number_or(m, "dt", s.config.dt, "scene.sim");
    if (m.contains("n_steps")) {
      if (!m.at("n_steps").is_number_integer()) throw ValidationError("scene.sim.n_steps: expected an integer");
      s.config.n_steps = m.at("n_steps").get<std::int64_t>();
    }
    if (m.contains("output_stride")) {
      if (!m.at("output_stride").is_number_integer())
        throw ValidationError("scene.sim.output_stride: expected an integer");
      s.config.output_stride = m.at("output_stride").get<std::int64_t>();
    }
    if (m.contains("gravity")) s.config.gravity = json_vec3(m.at("gravity"), "scene.sim.gravity");
  }

  if (j.contains("camera")) {
    const json& c = j.at("camera");
    if (c.contains("position")) s.camera.position = json_vec3(c.at("position"), "scene.camera.position");
    if (c.contains("forward")) s.camera.forward = json_vec3(c.at("forward"), "scene.camera.forward");
    if (c.contains("up")) s.camera.up = json_vec3(c.at("up"), "scene.camera.up");
    s.camera.focal = number_or(c, "focal", s.camera.focal, "scene.camera");
    s.camera.width = static_cast<int>(number_or(c, "width", s.camera.width, "scene.camera"));
    s.camera.height = static_cast<int>(number_or(c, "height", s.camera.height, "scene.camera"));
  }

  if (j.contains("splat")) {
    const json& sp = j.at("splat");
    s.splat.radius = number_or(sp, "radius", s.splat.radius, "scene.splat");
    s.splat.depth_band_fraction = number_or(sp, "depth_band_fraction", s.splat.depth_band_fraction, "scene.splat");
  }

  if (j.contains("materials")) s.materials = prior_from_json(j.at("materials"), "scene.materials");

  if (!j.contains("bodies") || !j.at("bodies").is_array())
    throw ValidationError("scene.bodies: expected an array");
  for (std::size_t i = 0; i < j.at("bodies").size(); ++i) {
    const json& b = j.at("bodies")[i];
    const std::string path = "scene.bodies[" + std::to_string(i) + "]";
    BodySpec body;
    const json& sh = json_member(b, "shape", path);
    const std::string type = json_or<std::string>(sh, "type", "");
    if (type == "box") {
      const Box bx = json_box(sh, path + ".shape");
      body.shape = BoxShape{bx.min, bx.max};
    } else if (type == "sphere") {
      body.shape = SphereShape{json_vec3(json_member(sh, "center", path + ".shape"), path + ".shape.center"),
                               json_number(json_member(sh, "radius", path + ".shape"), path + ".shape.radius")};
    } else if (type == "point_cloud") {
      const json& p = json_member(sh, "path", path + ".shape");
      if (!p.is_string()) throw ValidationError(path + ".shape.path: expected a string");
      body.shape = PointCloudShape{p.get<std::string>()};
    } else {
      throw ValidationError(path + ".shape.type: expected box, sphere or point_cloud");
    }
    const json& mat = json_member(b, "material", path);
    if (!mat.is_string()) throw ValidationError(path + ".material: expected a string");
    body.material = mat.get<std::string>();
    body.ppc = static_cast<int>(number_or(b, "ppc", body.ppc, path));
    if (b.contains("velocity")) body.velocity = json_vec3(b.at("velocity"), path + ".velocity");
    s.bodies.push_back(body);
  }

  if (j.contains("boundaries")) {
    for (std::size_t i = 0; i < j.at("boundaries").size(); ++i) {
      const json& b = j.at("boundaries")[i];
      const std::string path = "scene.boundaries[" + std::to_string(i) + "]";
      BoundaryCondition bc;
      const std::string type = json_or<std::string>(b, "type", "");
      if (type == "box_walls") {
        bc.kind = BoundaryKind::BoxWalls;
        bc.thickness = static_cast<int>(number_or(b, "thickness", bc.thickness, path));
        bc.sticky = json_or<bool>(b, "sticky", false);
      } else if (type == "slip_plane" || type == "sticky_plane") {
        bc.kind = type == "slip_plane" ? BoundaryKind::SlipPlane : BoundaryKind::StickyPlane;
        bc.point = json_vec3(json_member(b, "point", path), path + ".point");
        bc.normal = json_vec3(json_member(b, "normal", path), path + ".normal");
      } else {
        throw ValidationError(path + ".type: expected box_walls, slip_plane or sticky_plane");
      }
      bc.friction = number_or(b, "friction", 0.0, path);
      s.config.boundaries.push_back(bc);
    }
  }

  if (j.contains("forces")) {
    for (std::size_t i = 0; i < j.at("forces").size(); ++i) {
      const json& f = j.at("forces")[i];
      const std::string path = "scene.forces[" + std::to_string(i) + "]";
      ExternalForce ef;
      const std::string type = json_or<std::string>(f, "type", "");
      if (type == "gravity") {
        ef.kind = ForceKind::Gravity;
      } else if (type == "impulse") {
        ef.kind = ForceKind::Impulse;
      } else {
        throw ValidationError(path + ".type: expected gravity or impulse");
      }
      ef.vector = json_vec3(json_member(f, "vector", path), path + ".vector");
      ef.region = json_box(json_member(f, "region", path), path + ".region");
      const json& w = json_member(f, "window", path);
      if (!w.is_array() || w.size() != 2) throw ValidationError(path + ".window: expected [t_start, t_end]");
      ef.t_start = json_number(w[0], path + ".window[0]");
      ef.t_end = json_number(w[1], path + ".window[1]");
      s.config.forces.push_back(ef);
    }
  }

  try {
    s.config.validate();
    s.camera.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("scene: ") + e.what());
  }
  return s;
}

inline ordered_json scene_to_json(const SceneSpec& s) {
  using detail::vec3_json;
  ordered_json j;
  j["seed"] = s.seed;
  const auto& g = s.config.grid;
  j["grid"] = {{"resolution", {g.resolution[0], g.resolution[1], g.resolution[2]}},
               {"dx", g.dx},
               {"origin", vec3_json(g.origin)}};
  j["sim"] = {{"dt", s.config.dt},
              {"n_steps", s.config.n_steps},
              {"output_stride", s.config.output_stride},
              {"gravity", vec3_json(s.config.gravity)}};
  j["camera"] = {{"position", vec3_json(s.camera.position)},
                 {"forward", vec3_json(s.camera.forward)},
                 {"up", vec3_json(s.camera.up)},
                 {"focal", s.camera.focal},
                 {"width", s.camera.width},
                 {"height", s.camera.height}};
  j["splat"] = {{"radius", s.splat.radius}, {"depth_band_fraction", s.splat.depth_band_fraction}};
  if (!s.materials.empty()) j["materials"] = prior_to_json(s.materials);
  ordered_json bodies = ordered_json::array();
  for (const auto& b : s.bodies) {
    ordered_json shape;
    if (const auto* bx = std::get_if<BoxShape>(&b.shape)) {
      shape = {{"type", "box"}, {"min", vec3_json(bx->min)}, {"max", vec3_json(bx->max)}};
    } else if (const auto* sp = std::get_if<SphereShape>(&b.shape)) {
      shape = {{"type", "sphere"}, {"center", vec3_json(sp->center)}, {"radius", sp->radius}};
    } else {
      shape = {{"type", "point_cloud"}, {"path", std::get<PointCloudShape>(b.shape).path.string()}};
    }
    bodies.push_back(
        {{"shape", shape}, {"material", b.material}, {"ppc", b.ppc}, {"velocity", vec3_json(b.velocity)}});
  }
  j["bodies"] = bodies;
  ordered_json bcs = ordered_json::array();
  for (const auto& b : s.config.boundaries) {
    ordered_json e;
    if (b.kind == BoundaryKind::BoxWalls) {
      e = {{"type", "box_walls"}, {"thickness", b.thickness}, {"sticky", b.sticky}};
    } else {
      e = {{"type", b.kind == BoundaryKind::SlipPlane ? "slip_plane" : "sticky_plane"},
           {"point", vec3_json(b.point)},
           {"normal", vec3_json(b.normal)}};
    }
    e["friction"] = b.friction;
    bcs.push_back(e);
  }
  j["boundaries"] = bcs;
  ordered_json forces = ordered_json::array();
  for (const auto& f : s.config.forces) {
    forces.push_back({{"type", f.kind == ForceKind::Gravity ? "gravity" : "impulse"},
                      {"vector", vec3_json(f.vector)},
                      {"region", {{"min", vec3_json(f.region.min)}, {"max", vec3_json(f.region.max)}}},
                      {"window", {f.t_start, f.t_end}}});
  }
  j["forces"] = forces;
  return j;
}

inline SceneSpec load_scene(const std::filesystem::path& path) {
  return scene_from_json(read_json_file(path), path.parent_path());
}

}  // namespace mpmflow
