#pragma once

#include "lnrf/field/field.hpp"
#include "lnrf/trainer/field_optimizer.hpp"

namespace lnrf {

// Appends the latent-to-RGB layer after the 4-channel head. The background
// latent is kept and adapted too, so an RGB render of the converted field
// equals the per-pixel preview of the latent render.
inline FieldParams convert_to_rgb(FieldParams params, bool learnable = true) {
  if (params.rgb_mode()) throw ConfigError("field is already in RGB mode");
  params.rgb_adapter = init_rgb_adapter();
  params.rgb_adapter->learnable = learnable;
  return params;
}

struct RefineConfig {
  long iterations = 1000;
  FieldOptimizerConfig optim{};
  CameraConfig cameras{};
  std::uint64_t seed = 0;
};

// Continues optimization in pixel space against an RGB critic. Cameras are
// sampled from cfg.cameras, or taken round-robin from `fixed` when given.
inline FieldParams refine_loop(FieldParams params, Denoiser& den, const DiffusionSchedule& sched, const RefineConfig& cfg,
                               std::span<const Camera> fixed = {}, std::string_view prompt = "") {
  if (!params.rgb_mode()) throw ConfigError("refine_loop needs an RGB-mode field (call convert_to_rgb first)");
  FieldOptimizer opt(std::move(params));
  for (long it = 0; it < cfg.iterations; ++it) {
    auto rng = iteration_rng(cfg.seed, std::uint64_t(it));
    const Camera cam = fixed.empty() ? sample_camera(rng, cfg.cameras) : fixed[it % fixed.size()];
    opt.iterate(cam, den, prompt, sched, rng, cfg.optim);
  }
  return std::move(opt.params);
}

}  // namespace lnrf
