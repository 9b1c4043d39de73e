#pragma once

// Plain-text run configuration: `key = value` lines with optional `[table]`
// headers (one level), `#` comments, quoted strings, numbers and booleans.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>

#include "lnrf/trainer/trainer.hpp"

namespace lnrf {

using ConfigValue = std::variant<bool, double, std::string>;
using ConfigMap = std::map<std::string, ConfigValue>;  // keys are "table.key" or "key"

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

}  // namespace detail

inline ConfigMap parse_config(std::istream& in, const std::string& source = "config") {
  ConfigMap out;
  std::string line, table;
  int line_no = 0;
  const auto fail = [&](const std::string& msg) {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = detail::trim(detail::strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("unterminated table header");
      table = detail::trim(s.substr(1, s.size() - 2));
      if (!detail::valid_key(table)) fail("invalid table name '" + table + "'");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string raw = detail::trim(s.substr(eq + 1));
    if (!detail::valid_key(key)) fail("invalid key '" + key + "'");
    if (raw.empty()) fail("missing value for '" + key + "'");
    ConfigValue v;
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"') fail("unterminated string");
      std::string str;
      for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        if (raw[i] == '\\' && i + 2 < raw.size()) {
          const char n = raw[++i];
          str += n == 'n' ? '\n' : n == 't' ? '\t' : n;
        } else {
          str += raw[i];
        }
      }
      v = str;
    } else if (raw == "true" || raw == "false") {
      v = raw == "true";
    } else {
      std::size_t used = 0;
      double d = 0.0;
      try {
        d = std::stod(raw, &used);
      } catch (const std::exception&) {
        fail("invalid value '" + raw + "'");
      }
      if (used != raw.size()) fail("invalid value '" + raw + "'");
      v = d;
    }
    const std::string full = table.empty() ? key : table + "." + key;
    if (out.count(full)) fail("duplicate key '" + full + "'");
    out[full] = v;
  }
  return out;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

namespace detail {

inline double as_number(const std::string& key, const ConfigValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  throw ConfigError("config key '" + key + "' expects a number");
}
inline long as_integer(const std::string& key, const ConfigValue& v) {
  const double d = as_number(key, v);
  if (d != std::floor(d)) throw ConfigError("config key '" + key + "' expects an integer");
  return static_cast<long>(d);
}
inline bool as_bool(const std::string& key, const ConfigValue& v) {
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  throw ConfigError("config key '" + key + "' expects true or false");
}
inline std::string as_string(const std::string& key, const ConfigValue& v) {
  if (const std::string* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("config key '" + key + "' expects a string");
}

}  // namespace detail

inline DenoiserKind parse_denoiser_kind(const std::string& s) {
  if (s == "dirac") return DenoiserKind::dirac;
  if (s == "external") return DenoiserKind::external;
  throw ConfigError("unknown denoiser '" + s + "' (expected dirac or external)");
}

// Applies recognised keys to cfg. Unknown keys are an error. `mesh` goes to
// the sketch or paint mesh depending on cfg.mode.
inline void apply_config(TrainConfig& cfg, const ConfigMap& map) {
  using namespace detail;
  for (const auto& [key, v] : map) {
    if (key == "prompt") cfg.prompt = as_string(key, v);
    else if (key == "mesh") (cfg.mode == TrainMode::paint ? cfg.paint_mesh : cfg.sketch_mesh) = as_string(key, v);
    else if (key == "checkpoint") cfg.init_checkpoint = as_string(key, v);
    else if (key == "iters") cfg.iterations = as_integer(key, v);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_integer(key, v));
    else if (key == "sigma_s") cfg.weights.sigma_s = as_number(key, v);
    else if (key == "lambda_sds") cfg.weights.lambda_sds = as_number(key, v);
    else if (key == "lambda_sparse") cfg.weights.lambda_sparse = as_number(key, v);
    else if (key == "lambda_sketch") cfg.weights.lambda_sketch = as_number(key, v);
    else if (key == "denoiser") cfg.denoiser = parse_denoiser_kind(as_string(key, v));
    else if (key == "target") cfg.target = as_string(key, v);
    else if (key == "endpoint") cfg.endpoint = as_string(key, v);
    else if (key == "out_dir") cfg.out_dir = as_string(key, v);
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_integer(key, v);
    else if (key == "direction_prompts") cfg.direction_prompts = as_bool(key, v);
    else if (key == "random_background") cfg.random_background = as_bool(key, v);
    else if (key == "jitter") cfg.jitter = as_bool(key, v);
    else if (key == "sketch_extra_samples") cfg.sketch_extra_samples = int(as_integer(key, v));
    else if (key == "texture_size") cfg.texture_size = int(as_integer(key, v));
    else if (key == "adapter_learnable") cfg.adapter_learnable = as_bool(key, v);
    else if (key == "preview_fallback") cfg.preview_fallback = as_bool(key, v);
    else if (key == "optim.lr_hash") cfg.lr_hash = as_number(key, v);
    else if (key == "optim.lr_mlp") cfg.lr_mlp = as_number(key, v);
    else if (key == "optim.lr_texture") cfg.lr_texture = as_number(key, v);
    else if (key == "optim.beta1") cfg.beta1 = as_number(key, v);
    else if (key == "optim.beta2") cfg.beta2 = as_number(key, v);
    else if (key == "optim.eps") cfg.eps = as_number(key, v);
    else if (key == "camera.radius_min") cfg.camera.radius_min = as_number(key, v);
    else if (key == "camera.radius_max") cfg.camera.radius_max = as_number(key, v);
    else if (key == "camera.elevation_min_deg") cfg.camera.elevation_min = deg_to_rad(as_number(key, v));
    else if (key == "camera.elevation_max_deg") cfg.camera.elevation_max = deg_to_rad(as_number(key, v));
    else if (key == "camera.fov_deg") cfg.camera.fov_y = deg_to_rad(as_number(key, v));
    else if (key == "camera.resolution") cfg.camera.resolution = int(as_integer(key, v));
    else if (key == "field.levels") cfg.field.levels = int(as_integer(key, v));
    else if (key == "field.features") cfg.field.features = int(as_integer(key, v));
    else if (key == "field.log2_table") cfg.field.log2_table = int(as_integer(key, v));
    else if (key == "field.base_resolution") cfg.field.base_resolution = int(as_integer(key, v));
    else if (key == "field.growth") cfg.field.growth = as_number(key, v);
    else if (key == "field.hidden_layers") cfg.field.hidden_layers = int(as_integer(key, v));
    else if (key == "field.hidden_width") cfg.field.hidden_width = int(as_integer(key, v));
    else if (key == "field.bound") cfg.field.bound = as_number(key, v);
    else if (key == "field.density_bias") cfg.field.density_bias = as_number(key, v);
    else if (key == "render.steps") cfg.render.steps = int(as_integer(key, v));
    else if (key == "render.min_near") cfg.render.min_near = as_number(key, v);
    else if (key == "render.early_stop") cfg.render.early_stop = as_number(key, v);
    else if (key == "schedule.timesteps") cfg.schedule_steps = int(as_integer(key, v));
    else if (key == "schedule.beta_start") cfg.beta_start = as_number(key, v);
    else if (key == "schedule.beta_end") cfg.beta_end = as_number(key, v);
    else if (key == "schedule.weight") cfg.weight_mode = parse_weight_mode(as_string(key, v));
    else if (key == "schedule.t_min") cfg.sds.t_min_fraction = as_number(key, v);
    else if (key == "schedule.t_max") cfg.sds.t_max_fraction = as_number(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace lnrf
