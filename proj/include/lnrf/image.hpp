#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "lnrf/common.hpp"

namespace lnrf {

// Channel-major feature map: data[(c * height + y) * width + x]. Used for
// 4-channel latents (64x64x4 guidance renders) and 3-channel RGB.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }
  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double& at(int c, std::size_t pixel) { return data[c * pixels() + pixel]; }
  double at(int c, std::size_t pixel) const { return data[c * pixels() + pixel]; }

  bool same_shape(const Image& o) const { return channels == o.channels && height == o.height && width == o.width; }
  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
  std::string shape_string() const {
    return "(" + std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + ")";
  }
};

using LatentImage = Image;

inline constexpr int kLatentChannels = 4;
inline constexpr int kLatentSize = 64;

inline double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("mse: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

// Linear [-1, 1] output to [0, 1] display range, clamped.
inline double display_map(double v) { return std::clamp(0.5 * (v + 1.0), 0.0, 1.0); }

inline std::uint8_t to_byte(double unit) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

// Writes an 8-bit sRGB PNG from a 3-channel image holding [0, 1] values.
inline void write_png(const std::string& path, const Image& rgb) {
  if (rgb.channels != 3) throw ShapeError("write_png expects 3 channels, got " + std::to_string(rgb.channels));
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(rgb.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, rgb.width, rgb.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x)
      for (int c = 0; c < 3; ++c) row[3 * x + c] = to_byte(rgb.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads an 8-bit RGB/RGBA PNG into a 3-channel [0, 1] image.
inline Image read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Image out;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  out = Image(3, h, w);
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[3 * x + c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace lnrf
