#pragma once

#include <array>

#include "lnrf/image.hpp"

namespace lnrf {

// Linear latent-to-RGB approximation, rows = (r, g, b), columns = (c1..c4).
inline constexpr std::array<std::array<double, 4>, 3> kLatentToRgb = {{
    {0.298, 0.187, -0.158, -0.184},
    {0.207, 0.286, 0.189, -0.271},
    {0.208, 0.173, 0.264, -0.473},
}};

// 3x4 linear layer appended to the latent head for RGB refinement. The
// matrix is stored as the fixed constant above plus a learned residual, so
// the initial layer is exact in f64 while every learned scalar stays
// f32-representable for checkpointing.
struct RgbAdapter {
  std::array<double, 12> delta{};  // row-major 3x4 residual
  std::array<double, 3> bias{};
  bool learnable = true;

  double weight(int row, int col) const { return kLatentToRgb[row][col] + delta[4 * row + col]; }

  std::array<double, 3> apply(const std::array<double, 4>& latent) const {
    std::array<double, 3> rgb{};
    for (int r = 0; r < 3; ++r) {
      double s = bias[r];
      for (int c = 0; c < 4; ++c) s += weight(r, c) * latent[c];
      rgb[r] = s;
    }
    return rgb;
  }
};

inline RgbAdapter init_rgb_adapter() { return RgbAdapter{}; }

// Per-pixel adapter on a 4-channel latent image; returns linear RGB.
inline Image latent_preview(const Image& latent, const RgbAdapter& adapter = init_rgb_adapter()) {
  if (latent.channels != kLatentChannels)
    throw ShapeError("latent_preview expects 4 channels, got " + std::to_string(latent.channels));
  Image rgb(3, latent.height, latent.width);
  for (std::size_t p = 0; p < latent.pixels(); ++p) {
    const std::array<double, 4> z{latent.at(0, p), latent.at(1, p), latent.at(2, p), latent.at(3, p)};
    const auto c = adapter.apply(z);
    for (int r = 0; r < 3; ++r) rgb.at(r, p) = c[r];
  }
  return rgb;
}

// Linear RGB in [-1, 1] to display [0, 1].
inline Image to_display(const Image& linear_rgb) {
  Image out = linear_rgb;
  for (double& v : out.data) v = display_map(v);
  return out;
}

}  // namespace lnrf
