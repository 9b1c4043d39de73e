#pragma once

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lnrf/geometry/bvh.hpp"
#include "lnrf/guidance/bridge.hpp"
#include "lnrf/refine/refine.hpp"
#include "lnrf/trainer/checkpoint.hpp"
#include "lnrf/trainer/marching_cubes.hpp"

namespace lnrf {

enum class DenoiserKind { dirac, external };

inline constexpr const char* kDefaultEndpoint = "127.0.0.1:7861";

struct TrainConfig {
  TrainMode mode = TrainMode::latent_nerf;
  long iterations = -1;  // < 0 selects the per-mode default
  std::uint64_t seed = 0;

  double lr_hash = 1e-2;
  double lr_mlp = 1e-3;
  double lr_texture = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-15;

  LossWeights weights{};
  CameraConfig camera{};
  FieldConfig field{};
  RenderConfig render{};
  SdsConfig sds{};
  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  WeightMode weight_mode = WeightMode::one_minus_alpha_bar;

  std::string prompt;
  std::string sketch_mesh;
  std::string paint_mesh;
  std::string init_checkpoint;  // refine: trained latent field
  DenoiserKind denoiser = DenoiserKind::external;
  std::string target;    // dirac: tensor file with "target" and optional "cameras"
  std::string endpoint;  // external: host:port (else LNRF_BRIDGE, else the default)

  bool direction_prompts = true;
  bool random_background = false;
  bool jitter = true;
  int sketch_extra_samples = 0;
  int texture_size = 128;
  bool adapter_learnable = true;
  bool preview_fallback = false;  // paint export without a decoder

  std::string out_dir;       // empty: no files written
  long checkpoint_every = 0;  // 0: only the final checkpoint

  long resolved_iterations() const {
    if (iterations >= 0) return iterations;
    switch (mode) {
      case TrainMode::paint: return 2000;
      case TrainMode::refine: return 1000;
      default: return 5000;
    }
  }

  DiffusionSchedule schedule() const { return make_schedule(schedule_steps, beta_start, beta_end, weight_mode); }

  void validate() const {
    if (mode == TrainMode::sketch && sketch_mesh.empty()) throw ConfigError("sketch mode requires --mesh");
    if (mode == TrainMode::paint && paint_mesh.empty()) throw ConfigError("paint mode requires --mesh");
    if (mode == TrainMode::refine && init_checkpoint.empty())
      throw ConfigError("refine mode requires --checkpoint (a trained latent field)");
    if (denoiser == DenoiserKind::dirac && target.empty()) throw ConfigError("--denoiser dirac requires --target");
    if (texture_size < 1) throw ConfigError("texture size must be positive");
    if (checkpoint_every < 0) throw ConfigError("checkpoint interval must be >= 0");
    if (!(lr_hash > 0 && lr_mlp > 0 && lr_texture > 0)) throw ConfigError("learning rates must be > 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps >= 0))
      throw ConfigError("Adam moment coefficients must lie in [0, 1)");
    weights.validate();
    camera.validate();
    field.validate();
    if (render.steps < 2) throw ConfigError("render steps must be >= 2");
    (void)schedule();
  }

  // Hash of every setting that influences the optimization trajectory.
  std::uint64_t hash() const {
    std::ostringstream s;
    s << std::setprecision(17) << int(mode) << '|' << seed << '|' << lr_hash << '|' << lr_mlp << '|' << lr_texture
      << '|' << beta1 << '|' << beta2 << '|' << eps << '|' << weights.lambda_sds << '|' << weights.lambda_sparse
      << '|' << weights.lambda_sketch << '|' << weights.sigma_s << '|' << camera.radius_min << '|'
      << camera.radius_max << '|' << camera.elevation_min << '|' << camera.elevation_max << '|' << camera.fov_y
      << '|' << camera.resolution << '|' << field.levels << '|' << field.features << '|' << field.log2_table << '|'
      << field.base_resolution << '|' << field.growth << '|' << field.hidden_layers << '|' << field.hidden_width
      << '|' << field.bound << '|' << field.density_bias << '|' << render.steps << '|' << render.min_near << '|'
      << render.early_stop << '|' << sds.t_min_fraction << '|' << sds.t_max_fraction << '|' << schedule_steps << '|'
      << beta_start << '|' << beta_end << '|' << int(weight_mode) << '|' << prompt << '|' << sketch_mesh << '|'
      << paint_mesh << '|' << init_checkpoint << '|' << int(denoiser) << '|' << target << '|' << direction_prompts
      << '|' << random_background << '|' << jitter << '|' << sketch_extra_samples << '|' << texture_size << '|'
      << adapter_learnable;
    return fnv1a(s.str());
  }
};

// Appends a view-direction phrase: front for |azimuth| < 45 deg, back within
// 45 deg of 180, side otherwise; elevation above 60 deg is overhead.
inline std::string direction_prompt(const std::string& prompt, const Camera& cam) {
  const double el = rad_to_deg(cam.elevation);
  if (el > 60.0) return prompt + ", overhead view";
  double az = std::fmod(rad_to_deg(cam.azimuth), 360.0);
  if (az > 180.0) az -= 360.0;
  if (az <= -180.0) az += 360.0;
  if (std::abs(az) < 45.0) return prompt + ", front view";
  if (std::abs(std::abs(az) - 180.0) < 45.0) return prompt + ", back view";
  return prompt + ", side view";
}

// Dirac targets: one image per view, with optional fixed cameras.
struct TargetSet {
  std::vector<Image> images;
  std::vector<Camera> cameras;  // empty: cameras are sampled
};

inline TensorTable target_table(const std::vector<Image>& images, const std::vector<Camera>& cameras = {}) {
  if (images.empty()) throw ShapeError("target set is empty");
  const Image& f = images.front();
  std::vector<double> all;
  for (const Image& im : images) {
    if (!im.same_shape(f)) throw ShapeError("target images differ in shape");
    all.insert(all.end(), im.data.begin(), im.data.end());
  }
  TensorTable t;
  t.add("target", {images.size(), std::uint64_t(f.channels), std::uint64_t(f.height), std::uint64_t(f.width)}, all);
  if (!cameras.empty()) {
    if (cameras.size() != images.size()) throw ShapeError("one camera per target view expected");
    std::vector<double> cams;
    for (const Camera& c : cameras) {
      cams.push_back(c.azimuth);
      cams.push_back(c.elevation);
      cams.push_back(c.position.norm());
    }
    t.add("cameras", {cameras.size(), 3}, cams);
  }
  return t;
}

// Cameras are stored as (azimuth, elevation, radius) in radians.
inline TargetSet load_targets(const std::string& path, const CameraConfig& cam_cfg) {
  const TensorTable t = read_tensor_file(path);
  const TensorRecord& r = t.get("target");
  std::vector<std::uint64_t> d = r.dims;
  if (d.size() == 3) d.insert(d.begin(), 1);
  if (d.size() != 4) throw ShapeError("target must be [C, H, W] or [V, C, H, W]");
  TargetSet set;
  const std::size_t per = d[1] * d[2] * d[3];
  for (std::uint64_t v = 0; v < d[0]; ++v) {
    Image im(static_cast<int>(d[1]), static_cast<int>(d[2]), static_cast<int>(d[3]));
    for (std::size_t i = 0; i < per; ++i) im.data[i] = r.data[v * per + i];
    set.images.push_back(std::move(im));
  }
  if (const auto* c = t.find("cameras")) {
    if (c->dims.size() != 2 || c->dims[0] != d[0] || c->dims[1] != 3)
      throw ShapeError("cameras must be [V, 3] matching the target views");
    for (std::uint64_t v = 0; v < d[0]; ++v)
      set.cameras.push_back(orbit_camera(c->data[3 * v], c->data[3 * v + 1], c->data[3 * v + 2], cam_cfg.fov_y,
                                         cam_cfg.resolution));
  }
  return set;
}

struct MetricsRecord {
  std::uint64_t iteration = 0;
  int t = 0;
  double sds_proxy = 0.0;
  double sparse = 0.0;
  double sketch = 0.0;
  double total = 0.0;
  double conservation = 0.0;
  double elapsed = 0.0;

  nlohmann::json to_json() const {
    return {{"iteration", iteration}, {"t", t},         {"sds_proxy", sds_proxy},       {"sparse", sparse},
            {"sketch", sketch},       {"total", total}, {"conservation", conservation}, {"elapsed", elapsed}};
  }
};

// The denoiser (and, when external, the decoder) used by a run.
struct Guidance {
  std::vector<std::unique_ptr<DiracDenoiser>> dirac;  // one per target view
  std::vector<Camera> cameras;
  std::unique_ptr<ExternalDenoiser> external;

  Denoiser& for_view(std::size_t v) {
    if (external) return *external;
    return *dirac[v % dirac.size()];
  }
  LatentDecoder* decoder() { return external.get(); }
};

inline Guidance make_guidance(const TrainConfig& cfg, int expected_channels) {
  Guidance g;
  if (cfg.denoiser == DenoiserKind::dirac) {
    TargetSet set = load_targets(cfg.target, cfg.camera);
    const DiffusionSchedule sched = cfg.schedule();
    for (Image& im : set.images) {
      if (im.channels != expected_channels || im.height != cfg.camera.resolution ||
          im.width != cfg.camera.resolution)
        throw ConfigError("target shape " + im.shape_string() + " does not match the render (" +
                          std::to_string(expected_channels) + " channels at " +
                          std::to_string(cfg.camera.resolution) + "^2)");
      g.dirac.push_back(std::make_unique<DiracDenoiser>(std::move(im), sched));
    }
    g.cameras = std::move(set.cameras);
  } else {
    std::string ep = bridge::resolve_endpoint(cfg.endpoint);
    if (ep.empty()) ep = kDefaultEndpoint;
    g.external = std::make_unique<ExternalDenoiser>(ep);
  }
  return g;
}

inline FieldOptimizerConfig optimizer_config(const TrainConfig& cfg) {
  FieldOptimizerConfig o;
  o.hash_adam = {cfg.lr_hash, cfg.beta1, cfg.beta2, cfg.eps, true};
  o.mlp_adam = {cfg.lr_mlp, cfg.beta1, cfg.beta2, cfg.eps, true};
  o.render = cfg.render;
  o.render.bound = cfg.field.bound;
  o.sds = cfg.sds;
  o.weights = cfg.weights;
  o.random_background = cfg.random_background;
  o.jitter = cfg.jitter;
  o.sketch_extra_samples = cfg.sketch_extra_samples;
  return o;
}

inline PaintConfig paint_config(const TrainConfig& cfg) {
  PaintConfig p;
  p.adam = {cfg.lr_texture, cfg.beta1, cfg.beta2, cfg.eps, true};
  p.random_background = cfg.random_background;
  p.raster.resolution = cfg.camera.resolution;
  p.raster.auto_atlas = true;
  p.sds = cfg.sds;
  return p;
}

inline Mesh load_paint_mesh(const std::string& path) {
  Mesh mesh = load_obj(path);
  if (!mesh.has_uvs()) assign_naive_atlas(mesh);
  return mesh;
}

// Fresh state for cfg (iteration 0).
inline Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  Checkpoint ck;
  ck.mode = cfg.mode;
  ck.seed = cfg.seed;
  ck.config_hash = cfg.hash();
  switch (cfg.mode) {
    case TrainMode::paint:
      ck.paint = PaintState(random_texture(cfg.texture_size, cfg.texture_size, cfg.seed));
      break;
    case TrainMode::refine: {
      Checkpoint src = load_checkpoint(cfg.init_checkpoint);
      if (!src.field) throw ConfigError("refine needs a field checkpoint");
      ck.field = FieldOptimizer(convert_to_rgb(std::move(src.field->params), cfg.adapter_learnable));
      break;
    }
    default:
      ck.field = FieldOptimizer(init_field(cfg.field, cfg.seed));
  }
  return ck;
}

namespace detail {

template <class F>
void at_iteration(std::uint64_t it, F&& f) {
  const std::string where = "iteration " + std::to_string(it) + ": ";
  try {
    f();
  } catch (const BridgeError& e) {
    throw BridgeError(where + e.what(), e.request_id());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + e.what());
  } catch (const Error& e) {
    throw Error(where + e.what());
  }
}

}  // namespace detail

struct TrainHooks {
  std::ostream* metrics = nullptr;  // JSON lines
  std::vector<MetricsRecord>* records = nullptr;
};

// Runs the mode's loop up to cfg.iterations total iterations, continuing from
// `resume` when given. Checkpoints land in cfg.out_dir as checkpoint.lnrf
// (plus checkpoint_<iter>.lnrf every checkpoint_every iterations).
inline Checkpoint train(const TrainConfig& cfg, const Checkpoint* resume = nullptr, TrainHooks hooks = {}) {
  cfg.validate();
  const long total = cfg.resolved_iterations();
  Checkpoint ck;
  if (resume) {
    if (resume->mode != cfg.mode) throw ConfigError(std::string("checkpoint was written in mode ") +
                                                    mode_name(resume->mode) + ", not " + mode_name(cfg.mode));
    if (resume->config_hash != cfg.hash()) throw ConfigError("checkpoint was written with a different configuration");
    ck = *resume;
  } else {
    ck = initial_checkpoint(cfg);
  }

  const DiffusionSchedule sched = cfg.schedule();
  std::optional<Bvh> sketch;
  if (cfg.mode == TrainMode::sketch) sketch.emplace(load_obj(cfg.sketch_mesh));
  Mesh paint_mesh;
  if (cfg.mode == TrainMode::paint) paint_mesh = load_paint_mesh(cfg.paint_mesh);
  const int channels = cfg.mode == TrainMode::refine ? 3 : 4;
  Guidance guide = make_guidance(cfg, channels);
  const FieldOptimizerConfig ocfg = optimizer_config(cfg);
  const PaintConfig pcfg = paint_config(cfg);
  const std::filesystem::path out = cfg.out_dir;
  const auto start = std::chrono::steady_clock::now();

  for (std::uint64_t it = ck.iteration; it < std::uint64_t(total); ++it) {
    MetricsRecord rec;
    rec.iteration = it;
    detail::at_iteration(it, [&] {
      auto rng = iteration_rng(cfg.seed, it);
      std::size_t view = 0;
      Camera cam;
      if (guide.cameras.empty()) {
        cam = sample_camera(rng, cfg.camera);
        view = it;
      } else {
        view = it % guide.cameras.size();
        cam = guide.cameras[view];
      }
      const std::string prompt = cfg.direction_prompts ? direction_prompt(cfg.prompt, cam) : cfg.prompt;
      Denoiser& den = guide.for_view(view);
      if (ck.paint) {
        const PaintStats st = paint_step(*ck.paint, paint_mesh, cam, den, sched, prompt, rng, pcfg);
        rec.t = st.t;
        rec.sds_proxy = st.sds_proxy;
        rec.total = cfg.weights.lambda_sds * st.sds_proxy;
      } else {
        const StepStats st = ck.field->iterate(cam, den, prompt, sched, rng, ocfg, sketch ? &*sketch : nullptr);
        rec.t = st.t;
        rec.sds_proxy = st.sds_proxy;
        rec.sparse = st.sparse;
        rec.sketch = st.sketch;
        rec.total = st.total;
        rec.conservation = st.conservation;
      }
      if (!std::isfinite(rec.sparse) || !std::isfinite(rec.sketch))
        throw NumericError("non-finite loss value");
    });
    ck.iteration = it + 1;
    rec.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (hooks.metrics) *hooks.metrics << rec.to_json().dump() << '\n';
    if (hooks.records) hooks.records->push_back(rec);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && ck.iteration % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06llu.lnrf", static_cast<unsigned long long>(ck.iteration));
      save_checkpoint(out / name, ck);
    }
  }

  if (!cfg.out_dir.empty()) {
    save_checkpoint(out / "checkpoint.lnrf", ck);
    if (ck.paint) {
      const bool fallback = cfg.preview_fallback || cfg.denoiser == DenoiserKind::dirac;
      const Image rgb = export_texture(ck.paint->texture, guide.decoder(), fallback);
      write_textured_mesh(out, "textured", paint_mesh, rgb);
    }
  }
  return ck;
}

// Renders n views at equally spaced azimuths. Latent fields are shown through
// the decoder when one is given, else the linear preview; RGB fields are
// rendered directly. Files are view_000.png, view_001.png, ...
inline std::vector<std::filesystem::path> render_turntable(const FieldParams& params, int n_views,
                                                           const std::filesystem::path& out_dir,
                                                           LatentDecoder* decoder = nullptr,
                                                           double elevation = deg_to_rad(15.0), double radius = 2.5,
                                                           int resolution = 64, RenderConfig rcfg = {}) {
  if (n_views < 1) throw ConfigError("turntable needs at least one view");
  rcfg.bound = params.config.bound;
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  for (int i = 0; i < n_views; ++i) {
    const double az = 2.0 * kPi * i / n_views;
    const Camera cam = orbit_camera(az, elevation, radius, deg_to_rad(60.0), resolution);
    const RenderOutput r = render_view(params, cam, rcfg);
    Image rgb;
    if (params.rgb_mode())
      rgb = to_display(r.image);
    else if (decoder)
      rgb = decoder->decode(r.image);
    else
      rgb = to_display(latent_preview(r.image));
    char name[32];
    std::snprintf(name, sizeof name, "view_%03d.png", i);
    files.push_back(out_dir / name);
    write_png(files.back().string(), rgb);
  }
  return files;
}

}  // namespace lnrf
