#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lnrf/common.hpp"
#include "lnrf/geometry/bvh.hpp"
#include "lnrf/image.hpp"

namespace lnrf {

struct LossWeights {
  double lambda_sds = 1.0;
  double lambda_sparse = 5e-4;
  double lambda_sketch = 1.0;
  double sigma_s = 0.3;  // leniency, scene units squared

  void validate() const {
    if (!(std::isfinite(lambda_sds) && std::isfinite(lambda_sparse) && std::isfinite(lambda_sketch) &&
          std::isfinite(sigma_s)))
      throw ConfigError("loss weights must be finite");
    if (lambda_sds < 0 || lambda_sparse < 0 || lambda_sketch < 0) throw ConfigError("loss weights must be >= 0");
    if (!(sigma_s > 0)) throw ConfigError("sigma_s must be > 0");
  }
};

inline constexpr double kAlphaClamp = 1e-5;
inline constexpr double kBlendClamp = 1e-4;

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Importance of the occupancy constraint at distance d from the surface.
inline double sketch_weight(double distance, double sigma_s) {
  return -std::expm1(-distance * distance / (2.0 * sigma_s));
}

// Mean over points of BCE(alpha, label) * (1 - exp(-d^2 / (2 sigma_s))), with
// the label from the winding indicator. Gradient is w.r.t. the unclamped
// alpha (zero where the clamp is active).
inline LossAndGrad sketch_loss(std::span<const double> alpha, std::span<const SurfaceQuery> queries, double sigma_s,
                               double threshold = kWindingThreshold) {
  if (!(sigma_s > 0.0)) throw ConfigError("sigma_s must be > 0");
  if (alpha.size() != queries.size()) throw ShapeError("sketch_loss: alpha and query counts differ");
  LossAndGrad out;
  out.grad.assign(alpha.size(), 0.0);
  if (alpha.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(alpha.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double a = std::clamp(alpha[i], kAlphaClamp, 1.0 - kAlphaClamp);
    const bool inside = queries[i].winding > threshold;
    const double w = sketch_weight(queries[i].distance, sigma_s);
    sum += w * (inside ? -std::log(a) : -std::log1p(-a));
    const bool clamped = alpha[i] < kAlphaClamp || alpha[i] > 1.0 - kAlphaClamp;
    if (!clamped) out.grad[i] = inv_n * w * (inside ? -1.0 / a : 1.0 / (1.0 - a));
  }
  out.loss = sum * inv_n;
  return out;
}

inline double binary_entropy(double w) {
  w = std::clamp(w, kBlendClamp, 1.0 - kBlendClamp);
  return -(w * std::log(w) + (1.0 - w) * std::log1p(-w));
}

// Mean binary entropy of the foreground opacities.
inline LossAndGrad sparsity_loss(std::span<const double> w_blend) {
  LossAndGrad out;
  out.grad.assign(w_blend.size(), 0.0);
  if (w_blend.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(w_blend.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w_blend.size(); ++i) {
    sum += binary_entropy(w_blend[i]);
    const double w = w_blend[i];
    if (w > kBlendClamp && w < 1.0 - kBlendClamp) out.grad[i] = inv_n * (std::log1p(-w) - std::log(w));
  }
  out.loss = sum * inv_n;
  return out;
}

// Per-term gradients with respect to render quantities.
struct LossParts {
  Image sds_grad;                   // per-pixel SDS gradient on the rendered image
  double sds_proxy = 0.0;           // <grad, x>, logged only
  std::vector<double> sparse_grad;  // per pixel on w_blend
  double sparse_loss = 0.0;
  std::vector<double> sketch_grad;  // per ray sample on alpha
  double sketch_loss = 0.0;
};

struct CombinedGrad {
  Image d_image;
  std::vector<double> d_w_blend;
  std::vector<double> d_alpha;
  double total_logged = 0.0;
};

// The SDS term has no accessible value; its gradient is used directly and
// the scalar is a logging proxy.
inline double sds_proxy(const Image& grad, const Image& x) {
  if (!grad.same_shape(x)) throw ShapeError("sds_proxy: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += grad.data[i] * x.data[i];
  return s;
}

// The SDS gradient is averaged over image elements, like the other two
// terms are averaged over pixels and points. Summed, it would outweigh a
// mean-normalized sketch term by the element count at any fixed lambda.
inline CombinedGrad total_loss(const LossParts& parts, const LossWeights& weights) {
  CombinedGrad out;
  out.d_image = parts.sds_grad;
  const double sds_scale = out.d_image.size() ? weights.lambda_sds / double(out.d_image.size()) : 0.0;
  for (double& v : out.d_image.data) v *= sds_scale;
  out.d_w_blend = parts.sparse_grad;
  for (double& v : out.d_w_blend) v *= weights.lambda_sparse;
  out.d_alpha = parts.sketch_grad;
  for (double& v : out.d_alpha) v *= weights.lambda_sketch;
  out.total_logged = sds_scale * parts.sds_proxy + weights.lambda_sparse * parts.sparse_loss +
                     weights.lambda_sketch * parts.sketch_loss;
  return out;
}

}  // namespace lnrf
