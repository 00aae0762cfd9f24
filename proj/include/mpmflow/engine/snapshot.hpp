#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mpmflow/core/error.hpp"
#include "mpmflow/core/linalg.hpp"
#include "mpmflow/engine/stepper.hpp"

namespace mpmflow {

/// Particle positions and velocities at one emitted frame.
template <class T>
struct Snapshot {
  std::int64_t step = 0;
  double time = 0.0;
  std::vector<std::int64_t> ids;
  std::vector<Vec3<T>> x;
  std::vector<Vec3<T>> v;
  std::vector<double> mass;

  std::size_t size() const { return ids.size(); }
};

template <class T>
Snapshot<T> take_snapshot(const SimState<T>& s) {
  Snapshot<T> snap;
  snap.step = s.step;
  snap.time = s.time;
  snap.ids.reserve(s.particles.size());
  snap.x.reserve(s.particles.size());
  snap.v.reserve(s.particles.size());
  snap.mass.reserve(s.particles.size());
  for (const auto& p : s.particles) {
    snap.ids.push_back(p.id);
    snap.x.push_back(p.x);
    snap.v.push_back(p.v);
    snap.mass.push_back(p.mass);
  }
  return snap;
}

inline const char* kSnapshotHeader = "id,x,y,z,vx,vy,vz,mass";

/// `frame_%05d.csv`
inline std::string frame_file_name(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05lld.csv", static_cast<long long>(index));
  return buf;
}

/// Writes a snapshot as CSV with 17 significant digits, so values round-trip exactly.
template <class T>
void write_snapshot_csv(const Snapshot<T>& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << kSnapshotHeader << "\n";
  char buf[512];
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(s.ids[i]),
                  value_of(s.x[i][0]), value_of(s.x[i][1]), value_of(s.x[i][2]), value_of(s.v[i][0]),
                  value_of(s.v[i][1]), value_of(s.v[i][2]), s.mass[i]);
    out << buf;
  }
  if (!out) throw ValidationError("write failed for " + path.string());
}

inline Snapshot<double> read_snapshot_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSnapshotHeader)
    throw FormatError(path.string() + ": expected header '" + std::string(kSnapshotHeader) + "'");
  Snapshot<double> s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    long long id = 0;
    double x, y, z, vx, vy, vz, m;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf,%lf,%lf%c", &id, &x, &y, &z, &vx, &vy, &vz, &m, &tail) !=
        8)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    s.ids.push_back(id);
    s.x.push_back({x, y, z});
    s.v.push_back({vx, vy, vz});
    s.mass.push_back(m);
  }
  return s;
}

}  // namespace mpmflow
