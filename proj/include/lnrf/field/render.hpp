#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <random>
#include <vector>

#include "lnrf/field/camera.hpp"
#include "lnrf/field/field.hpp"
#include "lnrf/image.hpp"

namespace lnrf {

// Anything that maps a point to (density, color) can be volume rendered:
// the learned field (FieldEvaluator) or an analytic scene.
template <class F>
concept RadianceField = requires(F& f, const Vec3& p) {
  { f.sample(p) } -> std::same_as<PointSample>;
  { f.channels() } -> std::convertible_to<int>;
  { f.background() } -> std::same_as<std::array<double, 4>>;
};

struct RenderConfig {
  int steps = 64;
  double min_near = 0.05;
  double bound = 1.0;
  // Stop marching once transmittance drops below this (0 disables).
  double early_stop = 0.0;
  // Replaces the field's background for this render (not differentiated).
  std::optional<std::array<double, 4>> background;

  // Reference step used for single-point occupancy.
  double reference_step() const { return 2.0 * bound / steps; }
};

// Ray/box slab test against [-bound, bound]^3. Returns false on a miss.
inline bool intersect_box(const Ray& ray, double bound, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / ray.direction[a];
    double ta = (-bound - ray.origin[a]) * inv;
    double tb = (bound - ray.origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

// Quadrature weights w_i = T_i (1 - exp(-sigma_i delta_i)) with
// T_i = exp(-sum_{j<i} sigma_j delta_j). Returns the residual transmittance.
inline double composite_weights(const double* sigma_delta, int n, double* weights) {
  double trans = 1.0;
  for (int i = 0; i < n; ++i) {
    const double alpha = -std::expm1(-sigma_delta[i]);
    weights[i] = trans * alpha;
    trans *= std::exp(-sigma_delta[i]);
  }
  return trans;
}

// Per-sample record of a forward render, consumed by the backward pass and
// by losses defined on the ray samples.
struct RenderTrace {
  struct RaySpan {
    int first = 0;
    int count = 0;
    double delta = 0.0;
    double final_transmittance = 1.0;
  };
  std::vector<RaySpan> rays;  // one per pixel, row-major
  std::vector<Vec3> points;
  std::vector<double> sigma;
  std::vector<std::array<double, 4>> color;
  std::vector<double> weight;
  std::vector<double> transmittance;  // T_i before each sample
  std::array<double, 4> background{};
  bool background_learned = true;

  std::size_t sample_count() const { return points.size(); }
};

struct RenderOutput {
  Image image;
  std::vector<double> w_blend;  // per pixel, sum of weights
  std::vector<double> depth;    // expected depth along the ray (foreground)
  double max_conservation_error = 0.0;  // max |sum w + T_end - 1|
};

template <RadianceField Field, class Rng = std::mt19937_64>
RenderOutput render_view(Field& field, const Camera& cam, const RenderConfig& cfg, RenderTrace* trace = nullptr,
                         Rng* jitter = nullptr) {
  if (cfg.steps < 2) throw ConfigError("render steps must be >= 2");
  cam.validate();
  const int res = cam.resolution;
  const int channels = field.channels();
  const std::array<double, 4> bg = cfg.background ? *cfg.background : field.background();
  RenderOutput out;
  out.image = Image(channels, res, res);
  out.w_blend.assign(std::size_t(res) * res, 0.0);
  out.depth.assign(std::size_t(res) * res, 0.0);
  if (trace) {
    *trace = RenderTrace{};
    trace->rays.resize(std::size_t(res) * res);
    trace->background = bg;
    trace->background_learned = !cfg.background.has_value();
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> w(cfg.steps);

  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const std::size_t pix = std::size_t(y) * res + x;
      const Ray ray = cam.pixel_ray(x, y);
      std::array<double, 4> acc{};
      double wsum = 0.0, dsum = 0.0, trans = 1.0;
      double t0 = 0.0, t1 = 0.0;
      RenderTrace::RaySpan span;
      if (trace) span.first = static_cast<int>(trace->points.size());
      if (intersect_box(ray, cfg.bound, t0, t1)) {
        t0 = std::max(t0, cfg.min_near);
        if (t1 > t0) {
          const double delta = (t1 - t0) / cfg.steps;
          span.delta = delta;
          for (int i = 0; i < cfg.steps; ++i) {
            if (cfg.early_stop > 0.0 && trans < cfg.early_stop) break;
            const double offset = jitter ? unit(*jitter) : 0.5;
            const double t = t0 + (i + offset) * delta;
            const Vec3 p = ray.origin + t * ray.direction;
            const PointSample s = field.sample(p);
            const double tau = s.sigma * delta;
            const double wi = trans * -std::expm1(-tau);
            if (trace) {
              trace->points.push_back(p);
              trace->sigma.push_back(s.sigma);
              trace->color.push_back(s.color);
              trace->weight.push_back(wi);
              trace->transmittance.push_back(trans);
              ++span.count;
            }
            for (int c = 0; c < channels; ++c) acc[c] += wi * s.color[c];
            wsum += wi;
            dsum += wi * t;
            trans *= std::exp(-tau);
          }
        }
      }
      span.final_transmittance = trans;
      if (trace) trace->rays[pix] = span;
      for (int c = 0; c < channels; ++c) out.image.at(c, pix) = acc[c] + (1.0 - wsum) * bg[c];
      out.w_blend[pix] = wsum;
      out.depth[pix] = wsum > 0.0 ? dsum / wsum : 0.0;
      out.max_conservation_error = std::max(out.max_conservation_error, std::abs(wsum + trans - 1.0));
    }
  return out;
}

inline RenderOutput render_view(const FieldParams& params, const Camera& cam, const RenderConfig& cfg) {
  FieldEvaluator ev(params);
  return render_view(ev, cam, cfg);
}

// Upstream gradients of a render.
struct RenderGrad {
  Image d_image;                  // d loss / d pixel value (same shape as the render)
  std::vector<double> d_w_blend;  // per pixel; empty = none
  std::vector<double> d_sigma;    // per trace sample, added directly to d loss / d sigma; empty = none
};

// Back-propagates render gradients into `grads` (same layout as params).
// Samples are re-evaluated to recover the MLP activations.
inline void render_backward(const FieldParams& params, const RenderTrace& trace, const RenderGrad& upstream,
                            FieldParams& grads) {
  FieldEvaluator ev(params);
  const int channels = ev.channels();
  const std::size_t npix = trace.rays.size();
  if (upstream.d_image.channels != channels || upstream.d_image.pixels() != npix)
    throw ShapeError("render_backward: upstream gradient shape mismatch");
  const bool has_dw = !upstream.d_w_blend.empty();
  const bool has_ds = !upstream.d_sigma.empty();
  if (has_ds && upstream.d_sigma.size() != trace.sample_count())
    throw ShapeError("render_backward: per-sample gradient size mismatch");

  std::array<double, 4> d_bg{};
  std::vector<double> g;
  for (std::size_t pix = 0; pix < npix; ++pix) {
    const auto& span = trace.rays[pix];
    std::array<double, 4> dc{};
    for (int c = 0; c < channels; ++c) dc[c] = upstream.d_image.at(c, pix);
    const double dw = has_dw ? upstream.d_w_blend[pix] : 0.0;

    double wsum = 0.0;
    g.assign(span.count, 0.0);
    for (int k = 0; k < span.count; ++k) {
      const int s = span.first + k;
      double gk = dw;
      for (int c = 0; c < channels; ++c) gk += dc[c] * (trace.color[s][c] - trace.background[c]);
      g[k] = gk;
      wsum += trace.weight[s];
    }
    for (int c = 0; c < channels; ++c) d_bg[c] += (1.0 - wsum) * dc[c];

    // d loss/d sigma_i = delta (T_{i+1} g_i - sum_{k>i} w_k g_k)
    double suffix = 0.0;
    for (int k = span.count - 1; k >= 0; --k) {
      const int s = span.first + k;
      const double t_next = trace.transmittance[s] - trace.weight[s];
      double dsigma = span.delta * (t_next * g[k] - suffix);
      suffix += trace.weight[s] * g[k];
      if (has_ds) dsigma += upstream.d_sigma[s];
      std::array<double, 4> dcol{};
      for (int c = 0; c < channels; ++c) dcol[c] = trace.weight[s] * dc[c];
      if (dsigma == 0.0 && dcol == std::array<double, 4>{}) continue;
      ev.sample(trace.points[s]);
      ev.backward(dsigma, dcol, grads);
    }
  }

  if (!trace.background_learned) return;
  if (params.rgb_adapter) {
    const RgbAdapter& ad = *params.rgb_adapter;
    for (int c = 0; c < 4; ++c)
      for (int r = 0; r < 3; ++r) grads.bg_latent[c] += ad.weight(r, c) * d_bg[r];
    if (ad.learnable)
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) grads.rgb_adapter->delta[4 * r + c] += d_bg[r] * params.bg_latent[c];
        grads.rgb_adapter->bias[r] += d_bg[r];
      }
  } else {
    for (int c = 0; c < 4; ++c) grads.bg_latent[c] += d_bg[c];
  }
}

}  // namespace lnrf
