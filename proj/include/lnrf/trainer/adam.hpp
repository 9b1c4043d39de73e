#pragma once

#include <cmath>
#include <span>
#include <string_view>

#include "lnrf/common.hpp"

namespace lnrf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-15;
  // Round parameters and moments to binary32 after each update.
  bool store_f32 = true;
};

// One bias-corrected Adam update; `step` is 1-based. Entries listed in `mask`
// (when non-empty, one flag per parameter) are the only ones updated.
inline void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                      std::span<double> v, long step, const AdamConfig& cfg, std::string_view name = "param",
                      std::span<const unsigned char> mask = {}) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw ShapeError("adam_step: size mismatch for '" + std::string(name) + "'");
  if (step < 1) throw ConfigError("adam_step: step must be >= 1");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("non-finite gradient in '" + std::string(name) + "' at index " + std::to_string(i));
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  const auto store = [&](double x) { return cfg.store_f32 ? round_f32(x) : x; };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double g = grads[i];
    m[i] = store(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
    v[i] = store(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
    const double mh = m[i] / c1, vh = v[i] / c2;
    params[i] = store(params[i] - cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
  }
}

}  // namespace lnrf
