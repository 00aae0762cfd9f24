#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mpmflow/core/error.hpp"
#include "mpmflow/flow/flow_field.hpp"

namespace mpmflow {

/// Middlebury .flo tag: "PIEH" read as a little-endian float32.
inline constexpr float kFloMagic = 202021.25f;
/// Components with magnitude above this are "unknown flow".
inline constexpr float kFloUnknownThreshold = 1e9f;
/// Value written for invalid pixels.
inline constexpr float kFloUnknownValue = 1e10f;

namespace detail {

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((x >> (8 * i)) & 0xFFu));
}
inline std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Serializes a flow field to the Middlebury byte layout.
inline std::vector<unsigned char> encode_flo(const FlowField<double>& f) {
  if (f.width <= 0 || f.height <= 0) throw FormatError("write_flo: dimensions must be positive");
  std::vector<unsigned char> out;
  out.reserve(12 + 8 * f.size());
  detail::put_u32le(out, std::bit_cast<std::uint32_t>(kFloMagic));
  detail::put_u32le(out, static_cast<std::uint32_t>(f.width));
  detail::put_u32le(out, static_cast<std::uint32_t>(f.height));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const float u = f.valid[i] ? static_cast<float>(f.u[i]) : kFloUnknownValue;
    const float v = f.valid[i] ? static_cast<float>(f.v[i]) : kFloUnknownValue;
    detail::put_u32le(out, std::bit_cast<std::uint32_t>(u));
    detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline FlowField<double> decode_flo(const std::vector<unsigned char>& bytes, const std::string& what = "flo") {
  if (bytes.size() < 12) throw FormatError(what + ": truncated header");
  const float magic = std::bit_cast<float>(detail::get_u32le(bytes.data()));
  if (magic != kFloMagic) throw FormatError(what + ": bad magic number");
  const auto w = static_cast<std::int32_t>(detail::get_u32le(bytes.data() + 4));
  const auto h = static_cast<std::int32_t>(detail::get_u32le(bytes.data() + 8));
  if (w <= 0 || h <= 0) throw FormatError(what + ": non-positive dimensions");
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < 12 + 8 * n) throw FormatError(what + ": truncated data");
  FlowField<double> f(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    const float u = std::bit_cast<float>(detail::get_u32le(bytes.data() + 12 + 8 * i));
    const float v = std::bit_cast<float>(detail::get_u32le(bytes.data() + 16 + 8 * i));
    const bool ok = std::isfinite(u) && std::isfinite(v) && std::abs(u) <= kFloUnknownThreshold &&
                    std::abs(v) <= kFloUnknownThreshold;
    f.valid[i] = ok ? 1 : 0;
    f.u[i] = ok ? static_cast<double>(u) : 0.0;
    f.v[i] = ok ? static_cast<double>(v) : 0.0;
  }
  return f;
}

inline void write_flo(const FlowField<double>& f, const std::filesystem::path& path) {
  const auto bytes = encode_flo(f);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_flo: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write_flo: write failed for " + path.string());
}

inline FlowField<double> read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("read_flo: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flo(bytes, path.string());
}

}  // namespace mpmflow
