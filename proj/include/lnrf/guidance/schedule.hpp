#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lnrf/common.hpp"

namespace lnrf {

enum class WeightMode { uniform, one_minus_alpha_bar };

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "uniform") return WeightMode::uniform;
  if (s == "one_minus_alpha_bar") return WeightMode::one_minus_alpha_bar;
  throw ConfigError("unknown weight mode '" + s + "' (expected uniform or one_minus_alpha_bar)");
}

// DDPM cumulative signal levels alpha_bar[t] = prod_{s<=t} (1 - beta_s).
struct DiffusionSchedule {
  std::vector<double> alpha_bar;
  WeightMode weight_mode = WeightMode::one_minus_alpha_bar;

  int steps() const { return static_cast<int>(alpha_bar.size()); }

  double at(int t) const {
    if (t < 0 || t >= steps())
      throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + ")");
    return alpha_bar[t];
  }

  // SDS weight w(t).
  double weight(int t) const { return weight_mode == WeightMode::uniform ? 1.0 : 1.0 - at(t); }
};

inline DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end,
                                       WeightMode mode = WeightMode::one_minus_alpha_bar) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.weight_mode = mode;
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double beta = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (steps - 1);
    prod *= 1.0 - beta;
    s.alpha_bar[t] = prod;
  }
  return s;
}

inline DiffusionSchedule default_schedule() { return make_schedule(1000, 1e-4, 2e-2); }

}  // namespace lnrf
