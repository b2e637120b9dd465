#pragma once

#include <splatwalk/error.hpp>
#include <splatwalk/ply.hpp>
#include <splatwalk/render.hpp>

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace splatwalk {

/// Linear -> sRGB transfer, quantized to 8 bits.
inline std::uint8_t linear_to_srgb8(double c) {
  c = std::clamp(c, 0.0, 1.0);
  const double v = c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::vector<std::uint8_t> to_srgb8(const Image& img) {
  std::vector<std::uint8_t> out(img.rgb.size());
  std::transform(img.rgb.begin(), img.rgb.end(), out.begin(), linear_to_srgb8);
  return out;
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
  const auto bytes = to_srgb8(img);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw IoError("PNG encoding failed for '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Binary P6, sRGB encoded.
inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = to_srgb8(img);
  std::ostringstream header;
  header << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::string out = header.str();
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  write_file_bytes(path, out);
}

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::string out = header.str();
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  write_file_bytes(path, out);
}

inline GrayImage parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw FormatError("not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    if (std::stoi(next_token()) != 255) throw FormatError("PGM maxval must be 255");
  } catch (const std::logic_error&) {
    throw FormatError("malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0) throw FormatError("PGM dimensions must be positive");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (pos > bytes.size() || bytes.size() - pos < n) throw FormatError("PGM pixel data truncated");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline GrayImage read_pgm(const std::filesystem::path& path) { return parse_pgm(read_file_bytes(path)); }

}  // namespace splatwalk
