#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string_view>

#include "lnrf/guidance/denoiser.hpp"

namespace lnrf {

struct SdsConfig {
  double t_min_fraction = 0.02;
  double t_max_fraction = 0.98;
};

struct SdsSample {
  int t = 0;
  Image eps;
  Image grad;  // w(t) (eps_pred - eps), the per-pixel gradient on the render
};

// Admissible timestep range: the configured fractions of T, excluding any t
// whose noise level 1 - alpha_bar is below 1e-6.
inline std::pair<int, int> timestep_range(const DiffusionSchedule& sched, const SdsConfig& cfg) {
  const int n = sched.steps();
  int lo = std::clamp(static_cast<int>(std::lround(cfg.t_min_fraction * n)), 0, n - 1);
  const int hi = std::clamp(static_cast<int>(std::lround(cfg.t_max_fraction * n)), 0, n - 1);
  while (lo <= hi && 1.0 - sched.alpha_bar[lo] < kMinNoiseLevel) ++lo;
  if (lo > hi) throw ConfigError("no admissible SDS timestep in the schedule");
  return {lo, hi};
}

// One score-distillation sample on the rendered image x. The denoiser is a
// black box; x is treated as a leaf.
template <class Rng>
SdsSample sds_gradient(Denoiser& den, const Image& x, std::string_view prompt, const DiffusionSchedule& sched,
                       Rng& rng, const SdsConfig& cfg = {}) {
  const auto [lo, hi] = timestep_range(sched, cfg);
  SdsSample out;
  out.t = std::uniform_int_distribution<int>(lo, hi)(rng);
  out.eps = Image(x.channels, x.height, x.width);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.eps.data) v = normal(rng);

  const Image x_t = add_noise(x, out.t, out.eps, sched);
  const Image pred = den.predict_eps(x_t, out.t, prompt);
  if (!pred.same_shape(x_t))
    throw ShapeError("denoiser returned " + pred.shape_string() + " for input " + x_t.shape_string());
  if (!pred.all_finite()) throw NumericError("denoiser returned non-finite values");

  const double w = sched.weight(out.t);
  out.grad = Image(x.channels, x.height, x.width);
  for (std::size_t i = 0; i < x.size(); ++i) out.grad.data[i] = w * (pred.data[i] - out.eps.data[i]);
  return out;
}

}  // namespace lnrf
