#pragma once

#include <optional>
#include <string>

#include "lnrf/paint/paint.hpp"
#include "lnrf/trainer/field_optimizer.hpp"
#include "lnrf/trainer/tensor_file.hpp"

namespace lnrf {

enum class TrainMode { latent_nerf, sketch, paint, refine };

inline const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::latent_nerf: return "latent_nerf";
    case TrainMode::sketch: return "sketch";
    case TrainMode::paint: return "paint";
    case TrainMode::refine: return "refine";
  }
  return "?";
}

// Everything needed to continue a run: learned state, optimizer moments,
// iteration counter, seed and a hash of the trajectory-relevant config.
// Random draws are derived from (seed, iteration), so no generator state is
// stored.
struct Checkpoint {
  TrainMode mode = TrainMode::latent_nerf;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::optional<FieldOptimizer> field;
  std::optional<PaintState> paint;
};

inline TensorTable to_table(const Checkpoint& ck) {
  TensorTable t;
  t.add("meta.mode", {1}, std::vector<double>{double(static_cast<int>(ck.mode))});
  t.add("meta.iteration", {4}, encode_u64(ck.iteration));
  t.add("meta.seed", {4}, encode_u64(ck.seed));
  t.add("meta.config_hash", {4}, encode_u64(ck.config_hash));
  if (ck.field) {
    const FieldOptimizer& f = *ck.field;
    const FieldConfig& c = f.params.config;
    t.add("meta.field_config", {9},
          std::vector<double>{double(c.levels), double(c.features), double(c.log2_table), double(c.base_resolution),
                              c.growth, double(c.hidden_layers), double(c.hidden_width), c.bound, c.density_bias});
    // 0 = latent mode, 1 = RGB with learnable adapter, 2 = RGB with frozen adapter.
    const double rgb = !f.params.rgb_adapter ? 0.0 : f.params.rgb_adapter->learnable ? 1.0 : 2.0;
    t.add("meta.rgb_mode", {1}, std::vector<double>{rgb});
    t.add("meta.adam_step", {4}, encode_u64(std::uint64_t(f.step)));
    f.params.for_each_tensor([&](const std::string& n, std::span<const double> d, const auto& dims, ParamGroup) {
      t.add(n, dims, d);
    });
    f.m.for_each_tensor([&](const std::string& n, std::span<const double> d, const auto& dims, ParamGroup) {
      t.add("adam.m." + n, dims, d);
    });
    f.v.for_each_tensor([&](const std::string& n, std::span<const double> d, const auto& dims, ParamGroup) {
      t.add("adam.v." + n, dims, d);
    });
  }
  if (ck.paint) {
    const PaintState& p = *ck.paint;
    const std::vector<std::uint64_t> dims{std::uint64_t(p.texture.height), std::uint64_t(p.texture.width), 4};
    t.add("meta.adam_step", {4}, encode_u64(std::uint64_t(p.step)));
    t.add("paint.texture", dims, p.texture.data);
    t.add("adam.m.paint.texture", dims, p.m);
    t.add("adam.v.paint.texture", dims, p.v);
  }
  return t;
}

inline Checkpoint from_table(const TensorTable& t) {
  Checkpoint ck;
  const int mode = static_cast<int>(t.get("meta.mode").data.at(0));
  if (mode < 0 || mode > 3) throw ParseError("checkpoint has unknown mode " + std::to_string(mode));
  ck.mode = static_cast<TrainMode>(mode);
  ck.iteration = decode_u64(t.get("meta.iteration"));
  ck.seed = decode_u64(t.get("meta.seed"));
  ck.config_hash = decode_u64(t.get("meta.config_hash"));
  if (const auto* fc = t.find("meta.field_config")) {
    if (fc->data.size() != 9) throw ParseError("meta.field_config must hold 9 values");
    const auto& d = fc->data;
    FieldConfig c;
    c.levels = int(d[0]);
    c.features = int(d[1]);
    c.log2_table = int(d[2]);
    c.base_resolution = int(d[3]);
    c.growth = d[4];
    c.hidden_layers = int(d[5]);
    c.hidden_width = int(d[6]);
    c.bound = d[7];
    c.density_bias = d[8];
    FieldParams p = init_field(c, 0);
    const int rgb = static_cast<int>(t.get("meta.rgb_mode").data.at(0));
    if (rgb != 0) {
      p.rgb_adapter = init_rgb_adapter();
      p.rgb_adapter->learnable = rgb == 1;
    }
    FieldOptimizer f(std::move(p));
    f.step = static_cast<long>(decode_u64(t.get("meta.adam_step")));
    f.params.for_each_tensor([&](const std::string& n, std::span<double> d, const auto&, ParamGroup) {
      t.read_into(n, d);
    });
    f.m.for_each_tensor([&](const std::string& n, std::span<double> d, const auto&, ParamGroup) {
      t.read_into("adam.m." + n, d);
    });
    f.v.for_each_tensor([&](const std::string& n, std::span<double> d, const auto&, ParamGroup) {
      t.read_into("adam.v." + n, d);
    });
    ck.field = std::move(f);
  }
  if (const auto* tex = t.find("paint.texture")) {
    if (tex->dims.size() != 3 || tex->dims[2] != 4) throw ParseError("paint.texture must be [H, W, 4]");
    PaintState p(LatentTexture(int(tex->dims[0]), int(tex->dims[1])));
    t.read_into("paint.texture", p.texture.data);
    t.read_into("adam.m.paint.texture", p.m);
    t.read_into("adam.v.paint.texture", p.v);
    p.step = static_cast<long>(decode_u64(t.get("meta.adam_step")));
    ck.paint = std::move(p);
  }
  if (!ck.field && !ck.paint) throw ParseError("checkpoint holds neither a field nor a texture");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_tensor_file(path, to_table(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorTable t = read_tensor_file(path);
  try {
    return from_table(t);
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace lnrf
