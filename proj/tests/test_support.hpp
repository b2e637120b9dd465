#pragma once

// Shared fixtures for the test suites: random generators and raw PLY builders.

#include <splatwalk/gaussian.hpp>
#include <splatwalk/math.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace splatwalk::testing {

inline Gaussian3D random_gaussian(std::mt19937_64& rng, double extent = 5.0) {
  Gaussian3D g;
  g.center = Vec3(uniform(rng, -extent, extent), uniform(rng, -extent, extent), uniform(rng, -extent, extent));
  g.scale = Vec3(uniform(rng, 0.01, 0.5), uniform(rng, 0.01, 0.5), uniform(rng, 0.01, 0.5));
  g.rotation = random_rotation(rng);
  g.opacity = uniform(rng, 0.02, 0.98);
  g.color = Vec3(unit_double(rng), unit_double(rng), unit_double(rng));
  return g;
}

inline GaussianSet random_set(std::mt19937_64& rng, std::size_t n, double extent = 5.0) {
  std::vector<Gaussian3D> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(random_gaussian(rng, extent));
  return GaussianSet(std::move(v));
}

/// Builds a binary little-endian PLY with float properties in the given order.
inline std::string raw_ply(const std::vector<std::string>& names, const std::vector<std::vector<float>>& rows,
                           const std::string& extra_header = "") {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\n" << extra_header << "element vertex " << rows.size() << "\n";
  for (const auto& n : names) h << "property float " << n << "\n";
  h << "end_header\n";
  std::string out = h.str();
  for (const auto& r : rows)
    for (float f : r) out.append(reinterpret_cast<const char*>(&f), sizeof(float));
  return out;
}

inline const std::vector<std::string>& standard_names() {
  static const std::vector<std::string> names = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                                 "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
                                                 "rot_0",   "rot_1",   "rot_2",   "rot_3"};
  return names;
}

inline float read_float(const std::string& bytes, std::size_t offset) {
  float f;
  std::memcpy(&f, bytes.data() + offset, sizeof(float));
  return f;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("splatwalk_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace splatwalk::testing
