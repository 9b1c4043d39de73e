#pragma once

#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lnrf/config.hpp"

namespace lnrf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

// Flag values as given on the command line; unset flags leave config-file
// values (or defaults) in place.
struct Flags {
  std::optional<std::string> prompt, mesh, target, endpoint, out_dir, config, checkpoint, denoiser;
  std::optional<long> iters;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma_s, lambda_sparse, lambda_sketch;
  int views = 8;
  int res = 64;
  double iso = 0.5;
};

struct App {
  CLI::App app{"Latent-space NeRF, Sketch-Shape and Latent-Paint optimization", "lnrf"};
  Flags flags;
  std::vector<std::pair<CLI::App*, TrainMode>> train_commands;
  CLI::App* export_views = nullptr;
  CLI::App* export_mesh = nullptr;

  App() {
    app.require_subcommand(1);
    app.fallthrough(false);
    const auto add_train = [&](const std::string& name, const std::string& desc, TrainMode mode) {
      CLI::App* sub = app.add_subcommand(name, desc);
      sub->add_option("--prompt", flags.prompt, "Text prompt");
      if (mode == TrainMode::sketch || mode == TrainMode::paint)
        sub->add_option("--mesh", flags.mesh, mode == TrainMode::sketch ? "Sketch-Shape mesh (OBJ)" : "Mesh to texture (OBJ)");
      sub->add_option("--iters", flags.iters, "Number of iterations")->check(CLI::NonNegativeNumber);
      sub->add_option("--seed", flags.seed, "Random seed");
      if (mode != TrainMode::paint) {
        if (mode == TrainMode::sketch) {
          sub->add_option("--sigma-s", flags.sigma_s, "Sketch leniency sigma_S")->check(CLI::PositiveNumber);
          sub->add_option("--lambda-sketch", flags.lambda_sketch, "Sketch loss weight")->check(CLI::NonNegativeNumber);
        }
        sub->add_option("--lambda-sparse", flags.lambda_sparse, "Sparsity loss weight")->check(CLI::NonNegativeNumber);
      }
      sub->add_option("--denoiser", flags.denoiser, "Guidance: dirac (needs --target) or external")
          ->check(CLI::IsMember({"dirac", "external"}));
      sub->add_option("--target", flags.target, "Dirac target tensor file");
      sub->add_option("--endpoint", flags.endpoint, "Denoiser bridge host:port");
      sub->add_option("--out-dir", flags.out_dir, "Output directory (metrics go to stdout when absent)");
      sub->add_option("--config", flags.config, "Config file (key = value)");
      sub->add_option("--checkpoint", flags.checkpoint,
                      mode == TrainMode::refine ? "Trained latent field to refine" : "Resume from this checkpoint");
      train_commands.emplace_back(sub, mode);
    };
    add_train("generate", "Train a Latent-NeRF from a prompt", TrainMode::latent_nerf);
    add_train("sketch", "Train a Latent-NeRF constrained by a Sketch-Shape", TrainMode::sketch);
    add_train("paint", "Optimize a latent texture on a mesh (Latent-Paint)", TrainMode::paint);
    add_train("refine", "Convert a latent field to RGB and refine it", TrainMode::refine);

    export_views = app.add_subcommand("export-views", "Render a turntable of a trained field");
    export_views->add_option("--checkpoint", flags.checkpoint, "Field checkpoint")->required();
    export_views->add_option("--out-dir", flags.out_dir, "Output directory")->required();
    export_views->add_option("--views", flags.views, "Number of views")->check(CLI::PositiveNumber);
    export_views->add_option("--endpoint", flags.endpoint, "Decoder bridge host:port (preview when absent)");

    export_mesh = app.add_subcommand("export-mesh", "Extract a mesh with marching cubes");
    export_mesh->add_option("--checkpoint", flags.checkpoint, "Field checkpoint")->required();
    export_mesh->add_option("--out-dir", flags.out_dir, "Output directory")->required();
    export_mesh->add_option("--res", flags.res, "Grid resolution (>= 8)");
    export_mesh->add_option("--iso", flags.iso, "Occupancy level");
  }
};

// Top-level help followed by the help of every subcommand.
inline std::string help_text() {
  App a;
  std::string s = a.app.help();
  for (CLI::App* sub : a.app.get_subcommands({})) s += "\n" + sub->help();
  return s;
}

inline TrainConfig build_config(const Flags& f, TrainMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  if (f.config) apply_config(cfg, load_config(*f.config));
  if (f.prompt) cfg.prompt = *f.prompt;
  if (f.mesh) (mode == TrainMode::paint ? cfg.paint_mesh : cfg.sketch_mesh) = *f.mesh;
  if (f.iters) cfg.iterations = *f.iters;
  if (f.seed) cfg.seed = *f.seed;
  if (f.sigma_s) cfg.weights.sigma_s = *f.sigma_s;
  if (f.lambda_sparse) cfg.weights.lambda_sparse = *f.lambda_sparse;
  if (f.lambda_sketch) cfg.weights.lambda_sketch = *f.lambda_sketch;
  if (f.target) {
    cfg.target = *f.target;
    cfg.denoiser = DenoiserKind::dirac;
  }
  if (f.denoiser) cfg.denoiser = parse_denoiser_kind(*f.denoiser);
  if (f.endpoint) cfg.endpoint = *f.endpoint;
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  if (mode == TrainMode::refine && f.checkpoint) cfg.init_checkpoint = *f.checkpoint;
  if (cfg.iterations < -1) throw ConfigError("--iters must be >= 0");
  return cfg;
}

inline int run_train(const Flags& f, TrainMode mode, std::ostream& out) {
  const TrainConfig cfg = build_config(f, mode);
  cfg.validate();
  std::optional<Checkpoint> resume;
  if (mode != TrainMode::refine && f.checkpoint) resume = load_checkpoint(*f.checkpoint);
  TrainHooks hooks;
  if (cfg.out_dir.empty()) {
    hooks.metrics = &out;
  }
  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log.open(std::filesystem::path(cfg.out_dir) / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write metrics log in " + cfg.out_dir);
    hooks.metrics = &log;
  }
  train(cfg, resume ? &*resume : nullptr, hooks);
  return kExitOk;
}

inline int run_export_views(const Flags& f) {
  const Checkpoint ck = load_checkpoint(*f.checkpoint);
  if (!ck.field) throw ConfigError("export-views needs a field checkpoint");
  std::unique_ptr<ExternalDenoiser> decoder;
  if (f.endpoint) decoder = std::make_unique<ExternalDenoiser>(*f.endpoint);
  render_turntable(ck.field->params, f.views, *f.out_dir, decoder.get());
  return kExitOk;
}

inline int run_export_mesh(const Flags& f) {
  if (f.res < 8) throw ConfigError("--res must be >= 8");
  const Checkpoint ck = load_checkpoint(*f.checkpoint);
  if (!ck.field) throw ConfigError("export-mesh needs a field checkpoint");
  const Mesh mesh = marching_cubes(ck.field->params, f.res, f.iso);
  std::filesystem::create_directories(*f.out_dir);
  save_obj((std::filesystem::path(*f.out_dir) / "mesh.obj").string(), mesh);
  return kExitOk;
}

// Parses argv, runs the subcommand and maps failures to exit codes:
// 0 success, 1 configuration or usage error, 2 runtime error.
inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  App a;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--help" || arg == "-h") {
      if (i == 1) {
        out << help_text();
        return kExitOk;
      }
      break;
    }
  }
  try {
    a.app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    for (CLI::App* sub : a.app.get_subcommands()) out << sub->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << a.app.help();
    return kExitConfig;
  }
  try {
    for (const auto& [sub, mode] : a.train_commands)
      if (sub->parsed()) return run_train(a.flags, mode, out);
    if (a.export_views->parsed()) return run_export_views(a.flags);
    if (a.export_mesh->parsed()) return run_export_mesh(a.flags);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << a.app.help();
  return kExitConfig;
}

}  // namespace lnrf::cli
