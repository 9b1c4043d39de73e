#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lnrf/field/render.hpp"
#include "lnrf/geometry/bvh.hpp"
#include "lnrf/guidance/sds.hpp"
#include "lnrf/objectives.hpp"
#include "lnrf/trainer/adam.hpp"

namespace lnrf {

struct FieldOptimizerConfig {
  AdamConfig hash_adam{.lr = 1e-2};
  AdamConfig mlp_adam{.lr = 1e-3};
  RenderConfig render{};
  SdsConfig sds{};
  LossWeights weights{};
  bool random_background = false;
  bool jitter = true;
  int sketch_extra_samples = 0;  // uniform points added to the sketch term
  // Reference step for single-point occupancy; <= 0 uses render.reference_step().
  double delta_ref = 0.0;

  double reference_step() const { return delta_ref > 0.0 ? delta_ref : render.reference_step(); }
};

struct StepStats {
  int t = 0;
  double sds_proxy = 0.0;
  double sparse = 0.0;
  double sketch = 0.0;
  double conservation = 0.0;  // max |sum w + T_end - 1| over pixels
  double total = 0.0;
};

inline std::vector<std::span<double>> tensor_spans(FieldParams& p) {
  std::vector<std::span<double>> out;
  p.for_each_tensor([&](const std::string&, std::span<double> d, const auto&, ParamGroup) { out.push_back(d); });
  return out;
}

// Field parameters with their Adam moments and update counter.
struct FieldOptimizer {
  FieldParams params;
  FieldParams m;
  FieldParams v;
  long step = 0;

  explicit FieldOptimizer(FieldParams p = {}) : params(std::move(p)), m(zeros_like(params)), v(zeros_like(params)) {}

  // Moments must track the parameter layout after RGB conversion.
  void sync_layout() {
    m = zeros_like(params);
    v = zeros_like(params);
  }

  void apply(FieldParams& grads, const FieldOptimizerConfig& cfg) {
    ++step;
    std::vector<std::string> names;
    std::vector<ParamGroup> groups;
    params.for_each_tensor([&](const std::string& n, std::span<double>, const auto&, ParamGroup g) {
      names.push_back(n);
      groups.push_back(g);
    });
    auto ps = tensor_spans(params), gs = tensor_spans(grads), ms = tensor_spans(m), vs = tensor_spans(v);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (groups[i] == ParamGroup::adapter && !params.rgb_adapter->learnable) continue;
      const AdamConfig& a = groups[i] == ParamGroup::hash ? cfg.hash_adam : cfg.mlp_adam;
      adam_step(ps[i], gs[i], ms[i], vs[i], step, a, names[i]);
    }
  }

  // One score-distillation iteration from `cam`. With `sketch` set, the
  // occupancy constraint is evaluated on the ray samples.
  template <class Rng>
  StepStats iterate(const Camera& cam, Denoiser& den, std::string_view prompt, const DiffusionSchedule& sched,
                    Rng& rng, const FieldOptimizerConfig& cfg, const Bvh* sketch = nullptr) {
    RenderConfig rcfg = cfg.render;
    if (cfg.random_background) {
      std::normal_distribution<double> normal(0.0, 1.0);
      std::array<double, 4> bg{};
      for (double& b : bg) b = normal(rng);
      if (params.rgb_adapter) {
        const auto rgb = params.rgb_adapter->apply(bg);
        bg = {rgb[0], rgb[1], rgb[2], 0.0};
      }
      rcfg.background = bg;
    }
    FieldEvaluator ev(params);
    RenderTrace trace;
    const RenderOutput out = render_view(ev, cam, rcfg, &trace, cfg.jitter ? &rng : nullptr);

    LossParts parts;
    const SdsSample sds = sds_gradient(den, out.image, prompt, sched, rng, cfg.sds);
    parts.sds_grad = sds.grad;
    parts.sds_proxy = sds_proxy(sds.grad, out.image);
    auto sparse = sparsity_loss(out.w_blend);
    parts.sparse_grad = std::move(sparse.grad);
    parts.sparse_loss = sparse.loss;

    const double dref = cfg.reference_step();
    std::vector<Vec3> extra;
    if (sketch) {
      std::uniform_real_distribution<double> coord(-rcfg.bound, rcfg.bound);
      for (int i = 0; i < cfg.sketch_extra_samples; ++i) extra.emplace_back(coord(rng), coord(rng), coord(rng));
      const std::size_t n = trace.sample_count() + extra.size();
      std::vector<double> alpha(n), sigma(n);
      std::vector<SurfaceQuery> queries(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool on_ray = i < trace.sample_count();
        const Vec3& p = on_ray ? trace.points[i] : extra[i - trace.sample_count()];
        sigma[i] = on_ray ? trace.sigma[i] : ev.sample(p).sigma;
        alpha[i] = occupancy_from_sigma(sigma[i], dref);
        queries[i] = surface_query(*sketch, p);
      }
      auto sk = sketch_loss(alpha, queries, cfg.weights.sigma_s);
      parts.sketch_loss = sk.loss;
      // Chain d loss/d alpha into d loss/d sigma.
      for (std::size_t i = 0; i < n; ++i) sk.grad[i] *= dref * std::exp(-dref * sigma[i]);
      parts.sketch_grad = std::move(sk.grad);
    }

    CombinedGrad comb = total_loss(parts, cfg.weights);
    FieldParams grads = zeros_like(params);
    RenderGrad up;
    up.d_image = std::move(comb.d_image);
    up.d_w_blend = std::move(comb.d_w_blend);
    if (sketch) up.d_sigma.assign(comb.d_alpha.begin(), comb.d_alpha.begin() + trace.sample_count());
    render_backward(params, trace, up, grads);
    if (sketch)
      for (std::size_t i = 0; i < extra.size(); ++i) {
        const double ds = comb.d_alpha[trace.sample_count() + i];
        if (ds == 0.0) continue;
        ev.sample(extra[i]);
        ev.backward(ds, {}, grads);
      }
    apply(grads, cfg);

    StepStats st;
    st.t = sds.t;
    st.sds_proxy = parts.sds_proxy;
    st.sparse = parts.sparse_loss;
    st.sketch = parts.sketch_loss;
    st.conservation = out.max_conservation_error;
    st.total = comb.total_logged;
    return st;
  }
};

}  // namespace lnrf
