#pragma once

#include <cmath>
#include <random>

#include "lnrf/common.hpp"

namespace lnrf {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

// Pinhole camera with a square image. Azimuth and elevation are kept for
// direction-dependent prompt augmentation.
struct Camera {
  Vec3 position = Vec3(0, 0, 2);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3(0, 1, 0);
  double fov_y = deg_to_rad(60.0);
  int resolution = 64;
  double azimuth = 0.0;
  double elevation = 0.0;

  void validate() const {
    if ((position - look_at).squaredNorm() == 0.0) throw ConfigError("camera position equals look_at");
    if (!(fov_y > 0.0 && fov_y < kPi)) throw ConfigError("camera fov_y must lie in (0, pi)");
    if (resolution <= 0) throw ConfigError("camera resolution must be positive");
  }

  // Orthonormal basis (right, true up, forward).
  void basis(Vec3& right, Vec3& true_up, Vec3& forward) const {
    forward = (look_at - position).normalized();
    Vec3 r = forward.cross(up);
    if (r.squaredNorm() < 1e-20) r = forward.cross(Vec3(0, 0, -1));
    if (r.squaredNorm() < 1e-20) r = forward.cross(Vec3(1, 0, 0));
    right = r.normalized();
    true_up = right.cross(forward);
  }

  // Ray through continuous pixel coordinates (x right, y down; pixel centers
  // at half-integers).
  Ray ray(double px, double py) const {
    Vec3 r, u, f;
    basis(r, u, f);
    const double t = std::tan(0.5 * fov_y);
    const double nx = (px / resolution) * 2.0 - 1.0;
    const double ny = 1.0 - (py / resolution) * 2.0;
    return {position, (f + t * (nx * r + ny * u)).normalized()};
  }
  Ray pixel_ray(int x, int y) const { return ray(x + 0.5, y + 0.5); }
};

// Camera on a sphere around the origin; azimuth 0 looks from +z, elevation
// is measured up from the xz-plane.
inline Camera orbit_camera(double azimuth, double elevation, double radius, double fov_y = deg_to_rad(60.0),
                           int resolution = 64) {
  Camera cam;
  cam.position = radius * Vec3(std::cos(elevation) * std::sin(azimuth), std::sin(elevation),
                               std::cos(elevation) * std::cos(azimuth));
  cam.look_at = Vec3::Zero();
  cam.up = Vec3(0, 1, 0);
  cam.fov_y = fov_y;
  cam.resolution = resolution;
  cam.azimuth = azimuth;
  cam.elevation = elevation;
  return cam;
}

struct CameraConfig {
  double radius_min = 1.0;
  double radius_max = 1.5;
  double elevation_min = deg_to_rad(-10.0);
  double elevation_max = deg_to_rad(60.0);
  double fov_y = deg_to_rad(60.0);
  int resolution = 64;

  void validate() const {
    if (!(radius_min > 0.0 && radius_min <= radius_max)) throw ConfigError("camera radius range invalid");
    if (!(elevation_min <= elevation_max) || elevation_min < -kPi / 2 || elevation_max > kPi / 2)
      throw ConfigError("camera elevation range invalid");
    if (!(fov_y > 0.0 && fov_y < kPi)) throw ConfigError("camera fov_y must lie in (0, pi)");
    if (resolution <= 0) throw ConfigError("camera resolution must be positive");
  }
};

template <class Rng>
Camera sample_camera(Rng& rng, const CameraConfig& cfg) {
  cfg.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double az = 2.0 * kPi * unit(rng);
  const double el = cfg.elevation_min + (cfg.elevation_max - cfg.elevation_min) * unit(rng);
  const double r = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unit(rng);
  return orbit_camera(az >= 2.0 * kPi ? 0.0 : az, el, r, cfg.fov_y, cfg.resolution);
}

}  // namespace lnrf
