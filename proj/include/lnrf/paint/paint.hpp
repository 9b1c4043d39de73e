#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "lnrf/guidance/bridge.hpp"
#include "lnrf/guidance/sds.hpp"
#include "lnrf/image.hpp"
#include "lnrf/paint/raster.hpp"
#include "lnrf/refine/adapter.hpp"
#include "lnrf/trainer/adam.hpp"

namespace lnrf {

// H x W x 4 latent texture, data[(y * width + x) * 4 + c]. Row 0 is v = 1.
struct LatentTexture {
  int height = 128;
  int width = 128;
  std::vector<double> data;

  LatentTexture() = default;
  LatentTexture(int h, int w, double fill = 0.0) : height(h), width(w), data(std::size_t(h) * w * 4, fill) {}

  std::size_t texels() const { return std::size_t(height) * width; }
  double& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * 4 + c]; }
  double at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * 4 + c]; }
};

inline LatentTexture random_texture(int height, int width, std::uint64_t seed) {
  LatentTexture tex(height, width);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : tex.data) v = round_f32(normal(rng));
  return tex;
}

// Bilinear lookup with texel centers at half-integer coordinates.
struct TextureSample {
  std::array<double, 4> value{};
  std::array<std::size_t, 4> texel{};  // linear texel indices
  std::array<double, 4> weight{};
};

inline TextureSample sample_texture(const LatentTexture& tex, const Vec2& uv_in) {
  const double u = std::clamp(uv_in.x(), 0.0, 1.0), v = std::clamp(uv_in.y(), 0.0, 1.0);
  const double fx = u * tex.width - 0.5, fy = (1.0 - v) * tex.height - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double tx = fx - x0f, ty = fy - y0f;
  const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
  const auto cx = [&](int x) { return std::clamp(x, 0, tex.width - 1); };
  const auto cy = [&](int y) { return std::clamp(y, 0, tex.height - 1); };
  TextureSample s;
  const int xs[4] = {cx(x0), cx(x0 + 1), cx(x0), cx(x0 + 1)};
  const int ys[4] = {cy(y0), cy(y0), cy(y0 + 1), cy(y0 + 1)};
  s.weight = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  for (int k = 0; k < 4; ++k) {
    s.texel[k] = std::size_t(ys[k]) * tex.width + xs[k];
    for (int c = 0; c < 4; ++c) s.value[c] += s.weight[k] * tex.data[s.texel[k] * 4 + c];
  }
  return s;
}

// 4-channel feature map of the textured mesh; uncovered pixels take `background`.
inline Image render_texture(const GBuffer& gb, const LatentTexture& tex, const std::array<double, 4>& background = {}) {
  const int res = gb.resolution;
  Image img(4, res, res);
  for (std::size_t pix = 0; pix < img.pixels(); ++pix) {
    if (!gb.covered(pix)) {
      for (int c = 0; c < 4; ++c) img.at(c, pix) = background[c];
      continue;
    }
    const TextureSample s = sample_texture(tex, gb.uv[pix]);
    for (int c = 0; c < 4; ++c) img.at(c, pix) = s.value[c];
  }
  return img;
}

// Scatters per-pixel gradients onto texels through the bilinear weights, in
// pixel order. `touched` (optional) flags every texel in some footprint.
inline std::vector<double> texture_backward(const GBuffer& gb, const LatentTexture& tex, const Image& d_image,
                                            std::vector<unsigned char>* touched = nullptr) {
  if (d_image.channels != 4 || d_image.height != gb.resolution || d_image.width != gb.resolution)
    throw ShapeError("texture_backward: gradient shape mismatch");
  std::vector<double> grad(tex.data.size(), 0.0);
  if (touched) touched->assign(tex.texels(), 0);
  for (std::size_t pix = 0; pix < d_image.pixels(); ++pix) {
    if (!gb.covered(pix)) continue;
    const TextureSample s = sample_texture(tex, gb.uv[pix]);
    for (int k = 0; k < 4; ++k) {
      if (touched) (*touched)[s.texel[k]] = 1;
      for (int c = 0; c < 4; ++c) grad[s.texel[k] * 4 + c] += s.weight[k] * d_image.at(c, pix);
    }
  }
  return grad;
}

struct PaintConfig {
  AdamConfig adam{.lr = 1e-2};
  bool random_background = false;
  std::array<double, 4> background{};  // fixed background latent when not random
  // Update only texels inside some bilinear footprint of this step.
  bool sparse_updates = false;
  RasterOptions raster{};
  SdsConfig sds{};
};

struct PaintState {
  LatentTexture texture;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit PaintState(LatentTexture tex = {})
      : texture(std::move(tex)), m(texture.data.size(), 0.0), v(texture.data.size(), 0.0) {}
};

struct PaintStats {
  int t = 0;
  std::size_t covered_pixels = 0;
  double sds_proxy = 0.0;
};

// One Latent-Paint iteration: rasterize, pseudo-color from the texture,
// score-distill, back-propagate into texels, Adam update.
template <class Rng>
PaintStats paint_step(PaintState& state, const Mesh& mesh, const Camera& cam, Denoiser& den,
                      const DiffusionSchedule& sched, std::string_view prompt, Rng& rng, const PaintConfig& cfg = {}) {
  RasterOptions ropt = cfg.raster;
  ropt.resolution = cam.resolution;
  const GBuffer gb = rasterize(mesh, cam, ropt);
  std::array<double, 4> bg = cfg.background;
  if (cfg.random_background) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& b : bg) b = normal(rng);
  }
  const Image feat = render_texture(gb, state.texture, bg);
  const SdsSample sds = sds_gradient(den, feat, prompt, sched, rng, cfg.sds);
  std::vector<unsigned char> touched;
  const std::vector<double> grad = texture_backward(gb, state.texture, sds.grad, &touched);
  std::vector<unsigned char> mask;
  if (cfg.sparse_updates) {
    mask.resize(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) mask[i] = touched[i / 4];
  }
  ++state.step;
  adam_step(state.texture.data, grad, state.m, state.v, state.step, cfg.adam, "paint.texture", mask);

  PaintStats stats;
  stats.t = sds.t;
  stats.covered_pixels = gb.coverage();
  for (std::size_t i = 0; i < feat.size(); ++i) stats.sds_proxy += sds.grad.data[i] * feat.data[i];
  return stats;
}

inline Image texture_as_image(const LatentTexture& tex) {
  Image img(4, tex.height, tex.width);
  for (int y = 0; y < tex.height; ++y)
    for (int x = 0; x < tex.width; ++x)
      for (int c = 0; c < 4; ++c) img.at(c, y, x) = tex.at(y, x, c);
  return img;
}

// Decodes the latent texture once. With a decoder, 64x64 tiles are decoded
// (8x upscale each) and assembled; otherwise the linear preview is used at
// texture resolution if `allow_fallback`. Returns display RGB in [0, 1].
inline Image export_texture(const LatentTexture& tex, LatentDecoder* decoder, bool allow_fallback = true) {
  if (!decoder) {
    if (!allow_fallback) throw BridgeError("no latent decoder available and preview fallback disabled");
    return to_display(latent_preview(texture_as_image(tex)));
  }
  const int tile = kLatentSize;
  if (tex.height % tile || tex.width % tile)
    throw ShapeError("decoder export needs texture dimensions divisible by 64");
  const Image latent = texture_as_image(tex);
  Image out;
  for (int ty = 0; ty < tex.height / tile; ++ty)
    for (int tx = 0; tx < tex.width / tile; ++tx) {
      Image part(4, tile, tile);
      for (int c = 0; c < 4; ++c)
        for (int y = 0; y < tile; ++y)
          for (int x = 0; x < tile; ++x) part.at(c, y, x) = latent.at(c, ty * tile + y, tx * tile + x);
      const Image rgb = decoder->decode(part);
      if (rgb.channels != 3 || rgb.height != rgb.width) throw ShapeError("decoder returned " + rgb.shape_string());
      if (out.data.empty()) out = Image(3, rgb.height * tex.height / tile, rgb.width * tex.width / tile);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < rgb.height; ++y)
          for (int x = 0; x < rgb.width; ++x)
            out.at(c, ty * rgb.height + y, tx * rgb.width + x) = std::clamp(rgb.at(c, y, x), 0.0, 1.0);
    }
  return out;
}

// Writes <stem>.obj, <stem>.mtl and <stem>.png into `dir`.
inline void write_textured_mesh(const std::filesystem::path& dir, const std::string& stem, const Mesh& mesh,
                                const Image& rgb) {
  if (!mesh.has_uvs()) throw ConfigError("textured export needs UVs");
  std::filesystem::create_directories(dir);
  write_png((dir / (stem + ".png")).string(), rgb);
  {
    std::ofstream mtl(dir / (stem + ".mtl"));
    if (!mtl) throw IoError("cannot write " + (dir / (stem + ".mtl")).string());
    mtl << "newmtl material0\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nmap_Kd " << stem << ".png\n";
  }
  save_obj((dir / (stem + ".obj")).string(), mesh, stem + ".mtl");
}

}  // namespace lnrf
