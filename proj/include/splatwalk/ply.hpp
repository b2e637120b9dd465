#pragma once

// Binary little-endian PLY in the common 3DGS export layout:
//   x y z, f_dc_0..2, opacity (logit), scale_0..2 (log), rot_0..3 (w x y z)
// Any other vertex properties (normals, f_rest_*) are skipped on load.

#include <splatwalk/error.hpp>
#include <splatwalk/gaussian.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace splatwalk {

/// Degree-0 spherical harmonics constant.
inline constexpr double kShC0 = 0.28209479177387814;

/// Opacities are kept this far away from 0 and 1 so that logits stay finite.
inline constexpr double kOpacityEpsilon = 1e-12;

namespace detail {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<PlyType> parse_ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  return std::nullopt;
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  return v;
}

inline double read_ply_value(PlyType t, const unsigned char* p) {
  switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(p);
    case PlyType::UInt8: return read_le<std::uint8_t>(p);
    case PlyType::Int16: return read_le<std::int16_t>(p);
    case PlyType::UInt16: return read_le<std::uint16_t>(p);
    case PlyType::Int32: return read_le<std::int32_t>(p);
    case PlyType::UInt32: return read_le<std::uint32_t>(p);
    case PlyType::Float32: return read_le<float>(p);
    case PlyType::Float64: return read_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct PlyElement {
  std::string name;
  std::uint64_t count = 0;
  std::vector<PlyProperty> properties;
  std::size_t stride = 0;
  bool has_list = false;
};

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline constexpr std::array<const char*, 14> kRequiredVertexProperties = {
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3"};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Parses an in-memory PLY image. Throws FormatError on structural problems and
/// DataError (with the vertex index) on values that violate Gaussian invariants.
inline GaussianSet parse_splat_ply(std::string_view bytes) {
  using namespace detail;
  constexpr std::size_t kMaxHeader = 1 << 20;
  std::size_t pos = 0;
  std::vector<std::string_view> lines;
  for (;;) {
    if (pos >= bytes.size() || pos > kMaxHeader) throw FormatError("PLY header is not terminated by end_header");
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("PLY header is not terminated by end_header");
    std::string_view line = bytes.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    if (lines.empty() && line != "ply") throw FormatError("missing 'ply' magic line");
    if (line == "end_header") break;
    lines.push_back(line);
  }

  bool saw_format = false;
  std::vector<PlyElement> elements;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto tok = split_ws(lines[li]);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 3 || tok[1] != "binary_little_endian")
        throw FormatError("unsupported PLY format (binary_little_endian required)");
      saw_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw FormatError("malformed element line");
      PlyElement e;
      e.name = std::string(tok[1]);
      const auto* first = tok[2].data();
      const auto* last = first + tok[2].size();
      auto [ptr, ec] = std::from_chars(first, last, e.count);
      if (ec != std::errc() || ptr != last) throw FormatError("malformed element count for '" + e.name + "'");
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw FormatError("property declared before any element");
      auto& e = elements.back();
      if (tok.size() >= 2 && tok[1] == "list") {
        e.has_list = true;
        continue;
      }
      if (tok.size() != 3) throw FormatError("malformed property line");
      const auto type = parse_ply_type(tok[1]);
      if (!type) throw FormatError("unknown PLY property type '" + std::string(tok[1]) + "'");
      e.properties.push_back({std::string(tok[2]), *type, e.stride});
      e.stride += ply_type_size(*type);
    } else {
      throw FormatError("unexpected PLY header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!saw_format) throw FormatError("PLY header has no format line");

  std::size_t data = pos;
  const PlyElement* vertex = nullptr;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    if (e.has_list) throw FormatError("list-valued element '" + e.name + "' before vertex data is not supported");
    if (e.stride != 0 && e.count > (bytes.size() - data) / e.stride) throw FormatError("PLY data truncated");
    data += static_cast<std::size_t>(e.count) * e.stride;
  }
  if (!vertex) throw FormatError("PLY has no vertex element");
  if (vertex->has_list) throw FormatError("list properties in the vertex element are not supported");

  std::array<const PlyProperty*, kRequiredVertexProperties.size()> props{};
  for (std::size_t i = 0; i < kRequiredVertexProperties.size(); ++i) {
    for (const auto& p : vertex->properties)
      if (p.name == kRequiredVertexProperties[i]) props[i] = &p;
    if (!props[i]) throw FormatError(std::string("missing required vertex property '") + kRequiredVertexProperties[i] + "'");
  }
  const std::size_t stride = vertex->stride;
  if (vertex->count > (bytes.size() - data) / stride) throw FormatError("PLY vertex data truncated");

  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + data;
  std::vector<Gaussian3D> out;
  out.reserve(static_cast<std::size_t>(vertex->count));
  std::array<double, kRequiredVertexProperties.size()> v{};
  for (std::size_t k = 0; k < vertex->count; ++k) {
    const unsigned char* rec = base + k * stride;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = read_ply_value(props[i]->type, rec + props[i]->offset);
      if (!std::isfinite(v[i])) throw DataError(std::string("non-finite value in '") + kRequiredVertexProperties[i] + "'", k);
    }
    const Vec3 center(v[0], v[1], v[2]);
    const Vec3 color = Vec3::Constant(0.5) + kShC0 * Vec3(v[3], v[4], v[5]);
    const double opacity = std::clamp(logistic(v[6]), kOpacityEpsilon, 1.0 - kOpacityEpsilon);
    const Vec3 scale(std::exp(v[7]), std::exp(v[8]), std::exp(v[9]));
    if (!scale.allFinite() || (scale.array() <= 0.0).any()) throw DataError("log-scale out of representable range", k);
    const Quat rot(v[10], v[11], v[12], v[13]);
    if (rot.squaredNorm() == 0.0) throw DataError("zero-norm rotation quaternion", k);
    try {
      out.push_back(make_gaussian(center, scale, rot, opacity, color));
    } catch (const DataError& e) {
      throw DataError(e.what(), k);
    }
  }
  return GaussianSet(std::move(out));
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

inline GaussianSet load_splat_ply(const std::filesystem::path& path) { return parse_splat_ply(read_file_bytes(path)); }

/// Serializes with inverse activations applied, float32 per property.
inline std::string serialize_splat_ply(const GaussianSet& set) {
  if (set.empty()) throw ArgumentError("cannot save an empty Gaussian set");
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << set.size() << "\n";
  for (const char* name : detail::kRequiredVertexProperties) header << "property float " << name << "\n";
  header << "end_header\n";
  std::string out = header.str();
  const std::size_t record = detail::kRequiredVertexProperties.size() * sizeof(float);
  const std::size_t body = out.size();
  out.resize(body + set.size() * record);
  auto* dst = reinterpret_cast<unsigned char*>(out.data()) + body;
  for (const auto& g : set) {
    const double op = std::clamp(g.opacity, kOpacityEpsilon, 1.0 - kOpacityEpsilon);
    const std::array<double, 14> vals = {g.center.x(),
                                         g.center.y(),
                                         g.center.z(),
                                         (g.color.x() - 0.5) / kShC0,
                                         (g.color.y() - 0.5) / kShC0,
                                         (g.color.z() - 0.5) / kShC0,
                                         std::log(op / (1.0 - op)),
                                         std::log(g.scale.x()),
                                         std::log(g.scale.y()),
                                         std::log(g.scale.z()),
                                         g.rotation.w(),
                                         g.rotation.x(),
                                         g.rotation.y(),
                                         g.rotation.z()};
    for (double d : vals) {
      float f = static_cast<float>(d);
      if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&f);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
      std::memcpy(dst, &f, sizeof(float));
      dst += sizeof(float);
    }
  }
  return out;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline void save_splat_ply(const GaussianSet& set, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_splat_ply(set));
}

}  // namespace splatwalk
