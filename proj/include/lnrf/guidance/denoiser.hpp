#pragma once

#include <cmath>
#include <string_view>

#include "lnrf/guidance/schedule.hpp"
#include "lnrf/image.hpp"

namespace lnrf {

// Noise predictor eps_phi(x_t, t, prompt). Implementations must return an
// image of the same shape as x_t; callers verify this.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Image predict_eps(const Image& x_t, int t, std::string_view prompt) = 0;
};

// x_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) eps
inline Image add_noise(const Image& x, int t, const Image& eps, const DiffusionSchedule& sched) {
  if (!x.same_shape(eps)) throw ShapeError("add_noise: x " + x.shape_string() + " vs eps " + eps.shape_string());
  const double ab = sched.at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Image out(x.channels, x.height, x.width);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = a * x.data[i] + b * eps.data[i];
  return out;
}

inline constexpr double kMinNoiseLevel = 1e-6;

// Exact denoiser for a point-mass data distribution at `target`: inverts the
// forward noising step for eps. The prompt is ignored.
class DiracDenoiser final : public Denoiser {
 public:
  DiracDenoiser(Image target, DiffusionSchedule sched) : target_(std::move(target)), sched_(std::move(sched)) {}

  Image predict_eps(const Image& x_t, int t, std::string_view) override {
    if (!x_t.same_shape(target_))
      throw ShapeError("dirac denoiser: input " + x_t.shape_string() + " vs target " + target_.shape_string());
    const double ab = sched_.at(t);
    if (1.0 - ab < kMinNoiseLevel)
      throw ConfigError("dirac denoiser: timestep " + std::to_string(t) + " has 1 - alpha_bar below 1e-6");
    const double a = std::sqrt(ab), inv_b = 1.0 / std::sqrt(1.0 - ab);
    Image eps(x_t.channels, x_t.height, x_t.width);
    for (std::size_t i = 0; i < x_t.size(); ++i) eps.data[i] = (x_t.data[i] - a * target_.data[i]) * inv_b;
    return eps;
  }

  const Image& target() const { return target_; }

 private:
  Image target_;
  DiffusionSchedule sched_;
};

inline DiracDenoiser dirac_denoiser(Image target, const DiffusionSchedule& sched) {
  return DiracDenoiser(std::move(target), sched);
}

}  // namespace lnrf
