#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lnrf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (OBJ, config, frames).
class ParseError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration; the CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in parameters, gradients or outputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BridgeError : public Error {
 public:
  BridgeError(const std::string& what, std::uint32_t request_id = 0)
      : Error(what), request_id_(request_id) {}
  std::uint32_t request_id() const { return request_id_; }

 private:
  std::uint32_t request_id_;
};

using WarningSink = std::function<void(std::string_view)>;

inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(std::string_view msg) {
  if (warning_sink()) warning_sink()(msg);
}

// Learned parameters are kept exactly representable in binary32 so that the
// checkpoint payload (f32) restores them bit for bit.
inline double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-iteration generator derived from (seed, iteration). No generator state
// has to be carried across iterations or stored in checkpoints.
inline std::mt19937_64 iteration_rng(std::uint64_t seed, std::uint64_t iteration) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(iteration),
                    std::uint32_t(iteration >> 32)};
  return std::mt19937_64(seq);
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace lnrf
