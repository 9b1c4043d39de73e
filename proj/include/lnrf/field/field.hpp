#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lnrf/common.hpp"
#include "lnrf/refine/adapter.hpp"

namespace lnrf {

struct FieldConfig {
  int levels = 8;
  int features = 2;
  int log2_table = 14;
  int base_resolution = 16;
  double growth = 1.5;
  int hidden_layers = 2;
  int hidden_width = 64;
  double bound = 1.0;  // scene is the cube [-bound, bound]^3
  double density_bias = -1.0;

  std::uint32_t table_size() const { return 1u << log2_table; }
  int encoding_width() const { return levels * features; }
  int resolution(int level) const {
    return static_cast<int>(std::floor(base_resolution * std::pow(growth, level)));
  }
  void validate() const {
    if (levels < 1 || features < 1 || log2_table < 1 || log2_table > 24 || base_resolution < 1 || growth < 1.0 ||
        hidden_layers < 0 || hidden_width < 1 || !(bound > 0.0))
      throw ConfigError("invalid field configuration");
  }
};

// Fully connected layer, row-major weight[out][in].
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

enum class ParamGroup { hash, mlp, adapter };

// Latent-NeRF parameters: hash tables, MLP emitting (density logit, c1..c4),
// learned background latent and, after RGB conversion, the adapter layer.
struct FieldParams {
  FieldConfig config;
  std::vector<double> hash;  // [level][entry][feature]
  std::vector<Dense> mlp;
  std::array<double, 4> bg_latent{};
  std::optional<RgbAdapter> rgb_adapter;

  static constexpr int kHeadWidth = 5;

  bool rgb_mode() const { return rgb_adapter.has_value(); }
  int channels() const { return rgb_mode() ? 3 : 4; }

  // Visits every learned tensor as (name, data, dims, group). Works for const
  // and non-const instances.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    using Span = std::conditional_t<std::is_const_v<Self>, std::span<const double>, std::span<double>>;
    const auto& c = self.config;
    f(std::string("field.hash"), Span(self.hash),
      std::vector<std::uint64_t>{std::uint64_t(c.levels), c.table_size(), std::uint64_t(c.features)},
      ParamGroup::hash);
    for (std::size_t i = 0; i < self.mlp.size(); ++i) {
      auto& layer = self.mlp[i];
      const std::string base = "field.mlp." + std::to_string(i);
      f(base + ".weight", Span(layer.weight),
        std::vector<std::uint64_t>{std::uint64_t(layer.out), std::uint64_t(layer.in)}, ParamGroup::mlp);
      f(base + ".bias", Span(layer.bias), std::vector<std::uint64_t>{std::uint64_t(layer.out)}, ParamGroup::mlp);
    }
    f(std::string("field.bg_latent"), Span(self.bg_latent), std::vector<std::uint64_t>{4}, ParamGroup::mlp);
    if (self.rgb_adapter) {
      f(std::string("field.rgb_adapter.delta"), Span(self.rgb_adapter->delta), std::vector<std::uint64_t>{3, 4},
        ParamGroup::adapter);
      f(std::string("field.rgb_adapter.bias"), Span(self.rgb_adapter->bias), std::vector<std::uint64_t>{3},
        ParamGroup::adapter);
    }
  }
  template <class F>
  void for_each_tensor(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, std::span<const double> d, const auto&, ParamGroup) { n += d.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, std::span<const double> d, const auto&, ParamGroup) {
      for (double v : d) ok = ok && std::isfinite(v);
    });
    return ok;
  }

  void set_zero() {
    for_each_tensor([](const std::string&, std::span<double> d, const auto&, ParamGroup) {
      std::fill(d.begin(), d.end(), 0.0);
    });
  }
};

// Same layout as `params`, all zeros (gradient buffer).
inline FieldParams zeros_like(const FieldParams& params) {
  FieldParams g = params;
  g.set_zero();
  return g;
}

inline FieldParams init_field(const FieldConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  FieldParams p;
  p.config = cfg;
  std::uniform_real_distribution<double> table_init(-1e-4, 1e-4);
  p.hash.resize(std::size_t(cfg.levels) * cfg.table_size() * cfg.features);
  for (double& v : p.hash) v = round_f32(table_init(rng));

  int in = cfg.encoding_width();
  for (int l = 0; l <= cfg.hidden_layers; ++l) {
    const int out = l == cfg.hidden_layers ? FieldParams::kHeadWidth : cfg.hidden_width;
    Dense layer{in, out, std::vector<double>(std::size_t(in) * out), std::vector<double>(out, 0.0)};
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> w(-limit, limit);
    for (double& v : layer.weight) v = round_f32(w(rng));
    p.mlp.push_back(std::move(layer));
    in = out;
  }
  return p;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  return x ^ (y * 2654435761u) ^ (z * 805459861u);
}

// Corner lookups of one point on every level of the hash grid.
struct HashLookup {
  std::vector<std::array<std::uint32_t, 8>> index;  // absolute offsets into params.hash / features
  std::vector<std::array<double, 8>> weight;
};

inline void hash_lookup(const FieldConfig& cfg, const Vec3& p, HashLookup& out) {
  out.index.resize(cfg.levels);
  out.weight.resize(cfg.levels);
  const std::uint32_t mask = cfg.table_size() - 1;
  Vec3 u = (p.array() + cfg.bound) / (2.0 * cfg.bound);
  u = u.cwiseMax(Vec3::Zero()).cwiseMin(Vec3::Ones());
  for (int l = 0; l < cfg.levels; ++l) {
    const double res = cfg.resolution(l);
    std::array<std::uint32_t, 3> base{};
    std::array<double, 3> frac{};
    for (int a = 0; a < 3; ++a) {
      const double pos = u[a] * res;
      const double fl = std::floor(pos);
      base[a] = static_cast<std::uint32_t>(fl);
      frac[a] = pos - fl;
    }
    const std::uint32_t level_offset = static_cast<std::uint32_t>(l) * cfg.table_size();
    for (int k = 0; k < 8; ++k) {
      const std::uint32_t dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
      out.index[l][k] = level_offset + (spatial_hash(base[0] + dx, base[1] + dy, base[2] + dz) & mask);
      out.weight[l][k] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                         (dz ? frac[2] : 1.0 - frac[2]);
    }
  }
}

// Multiresolution hash encoding: per-level trilinear interpolation of the
// hashed corner features, concatenated across levels.
inline std::vector<double> hash_encode(const FieldParams& params, const Vec3& p) {
  const auto& cfg = params.config;
  HashLookup lk;
  hash_lookup(cfg, p, lk);
  std::vector<double> feat(cfg.encoding_width(), 0.0);
  for (int l = 0; l < cfg.levels; ++l)
    for (int k = 0; k < 8; ++k)
      for (int f = 0; f < cfg.features; ++f)
        feat[l * cfg.features + f] += lk.weight[l][k] * params.hash[std::size_t(lk.index[l][k]) * cfg.features + f];
  return feat;
}

struct PointSample {
  double sigma = 0.0;
  std::array<double, 4> color{};  // 4 latent channels, or 3 RGB in rgb mode
};

// Forward/backward evaluator for one point at a time. Holds the activations
// of the last forward pass; backward() must follow the matching sample().
class FieldEvaluator {
 public:
  // With apply_adapter = false an RGB-mode field reports its latent head.
  explicit FieldEvaluator(const FieldParams& params, bool apply_adapter = true)
      : params_(&params), use_adapter_(apply_adapter && params.rgb_adapter.has_value()) {
    const auto& cfg = params.config;
    acts_.resize(params.mlp.size() + 1);
    acts_[0].resize(cfg.encoding_width());
    for (std::size_t i = 0; i < params.mlp.size(); ++i) acts_[i + 1].resize(params.mlp[i].out);
    delta_.resize(acts_.size());
    for (std::size_t i = 0; i < acts_.size(); ++i) delta_[i].resize(acts_[i].size());
  }

  const FieldParams& params() const { return *params_; }
  int channels() const { return use_adapter_ ? 3 : 4; }

  std::array<double, 4> background() const {
    std::array<double, 4> bg = params_->bg_latent;
    if (use_adapter_) {
      const auto rgb = params_->rgb_adapter->apply(bg);
      bg = {rgb[0], rgb[1], rgb[2], 0.0};
    }
    return bg;
  }

  PointSample sample(const Vec3& p) {
    const FieldParams& P = *params_;
    const auto& cfg = P.config;
    hash_lookup(cfg, p, lookup_);
    auto& feat = acts_[0];
    std::fill(feat.begin(), feat.end(), 0.0);
    for (int l = 0; l < cfg.levels; ++l)
      for (int k = 0; k < 8; ++k) {
        const double w = lookup_.weight[l][k];
        const double* row = &P.hash[std::size_t(lookup_.index[l][k]) * cfg.features];
        for (int f = 0; f < cfg.features; ++f) feat[l * cfg.features + f] += w * row[f];
      }
    const std::size_t nl = P.mlp.size();
    for (std::size_t i = 0; i < nl; ++i) {
      const Dense& layer = P.mlp[i];
      const auto& a = acts_[i];
      auto& z = acts_[i + 1];
      for (int o = 0; o < layer.out; ++o) {
        const double* w = &layer.weight[std::size_t(o) * layer.in];
        double s = layer.bias[o];
        for (int j = 0; j < layer.in; ++j) s += w[j] * a[j];
        z[o] = (i + 1 < nl) ? std::max(s, 0.0) : s;
      }
    }
    const auto& head = acts_[nl];
    PointSample out;
    out.sigma = softplus(head[0] + cfg.density_bias);
    latent_ = {head[1], head[2], head[3], head[4]};
    if (use_adapter_) {
      const auto rgb = P.rgb_adapter->apply(latent_);
      out.color = {rgb[0], rgb[1], rgb[2], 0.0};
    } else {
      out.color = latent_;
    }
    if (!std::isfinite(out.sigma) || !std::all_of(out.color.begin(), out.color.end(), [](double v) { return std::isfinite(v); }))
      throw NumericError("non-finite field output (diverged parameters)");
    return out;
  }

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(sigma) and
  // d(loss)/d(color) for the point of the last sample() call.
  void backward(double dsigma, const std::array<double, 4>& dcolor, FieldParams& grads) {
    const FieldParams& P = *params_;
    const auto& cfg = P.config;
    const std::size_t nl = P.mlp.size();
    auto& dhead = delta_[nl];
    dhead[0] = dsigma * sigmoid(acts_[nl][0] + cfg.density_bias);
    if (use_adapter_) {
      std::array<double, 4> dlat{};
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) dlat[c] += P.rgb_adapter->weight(r, c) * dcolor[r];
        if (P.rgb_adapter->learnable) {
          for (int c = 0; c < 4; ++c) grads.rgb_adapter->delta[4 * r + c] += dcolor[r] * latent_[c];
          grads.rgb_adapter->bias[r] += dcolor[r];
        }
      }
      for (int c = 0; c < 4; ++c) dhead[1 + c] = dlat[c];
    } else {
      for (int c = 0; c < 4; ++c) dhead[1 + c] = dcolor[c];
    }

    for (std::size_t i = nl; i-- > 0;) {
      const Dense& layer = P.mlp[i];
      Dense& g = grads.mlp[i];
      auto& dz = delta_[i + 1];
      if (i + 1 < nl)
        for (int o = 0; o < layer.out; ++o)
          if (acts_[i + 1][o] <= 0.0) dz[o] = 0.0;
      const auto& a = acts_[i];
      auto& da = delta_[i];
      std::fill(da.begin(), da.end(), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double d = dz[o];
        if (d == 0.0) continue;
        g.bias[o] += d;
        double* gw = &g.weight[std::size_t(o) * layer.in];
        const double* w = &layer.weight[std::size_t(o) * layer.in];
        for (int j = 0; j < layer.in; ++j) {
          gw[j] += d * a[j];
          da[j] += d * w[j];
        }
      }
    }

    const auto& dfeat = delta_[0];
    for (int l = 0; l < cfg.levels; ++l)
      for (int k = 0; k < 8; ++k) {
        const double w = lookup_.weight[l][k];
        double* row = &grads.hash[std::size_t(lookup_.index[l][k]) * cfg.features];
        for (int f = 0; f < cfg.features; ++f) row[f] += w * dfeat[l * cfg.features + f];
      }
  }

 private:
  const FieldParams* params_;
  bool use_adapter_;
  HashLookup lookup_;
  std::vector<std::vector<double>> acts_;   // acts_[0] = encoding, acts_[i+1] = layer i output
  std::vector<std::vector<double>> delta_;  // gradients w.r.t. acts_
  std::array<double, 4> latent_{};
};

struct FieldValue {
  double sigma = 0.0;
  std::array<double, 4> latent{};
};

// Density and the four latent channels at p (p is clamped to the scene box).
inline FieldValue field_eval(const FieldParams& params, const Vec3& p) {
  FieldEvaluator ev(params, /*apply_adapter=*/false);
  const PointSample s = ev.sample(p);
  bool finite = std::isfinite(s.sigma);
  for (double c : s.color) finite = finite && std::isfinite(c);
  if (!finite) throw NumericError("field_eval: non-finite output, parameters have diverged");
  return {s.sigma, s.color};
}

// Occupancy of a single point: 1 - exp(-delta_ref * sigma).
inline double occupancy_from_sigma(double sigma, double delta_ref) { return -std::expm1(-delta_ref * sigma); }

inline double point_occupancy(const FieldParams& params, const Vec3& p, double delta_ref) {
  return occupancy_from_sigma(field_eval(params, p).sigma, delta_ref);
}

}  // namespace lnrf
