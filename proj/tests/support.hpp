#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lnrf/lnrf.hpp"

namespace lnrf::testing {

// Solid angle of triangle (a, b, c) at p by direct quadrature. p is projected
// onto the triangle plane (foot F, height h); the triangle is swept in polar
// angle around F edge by edge, and along each ray the surface integral of
// |h| / r^3 is done in closed form: 1 - |h| / sqrt(rho^2 + h^2). Signed so
// that points behind the triangle (opposite its right-hand normal) are
// positive.
inline double solid_angle_quadrature(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& p) {
  const Vec3 n = (b - a).cross(c - a).normalized();
  const double h = n.dot(p - a);
  const Vec3 f = p - h * n;
  const Vec3 v[3] = {a, b, c};
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e0 = v[i], de = v[(i + 1) % 3] - v[i];
    const auto integrand = [&](double s) {
      const Vec3 q = e0 + s * de - f;
      const double r2 = q.squaredNorm();
      const double dtheta = q.cross(de).dot(n) / r2;
      return (1.0 - std::abs(h) / std::sqrt(r2 + h * h)) * dtheta;
    };
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 1.0, 10, 1e-13);
  }
  return h > 0.0 ? -total : total;
}

inline double winding_quadrature(const Mesh& mesh, const Vec3& p) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.size(); ++t)
    s += solid_angle_quadrature(mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2), p);
  return s / (4.0 * kPi);
}

// Unsigned point-triangle distance without Voronoi regions: interior
// projection if it lands inside, else the nearest of the three segments.
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const Vec3 q = p - n.dot(p - a) / n.squaredNorm() * n;
  const auto side = [&](const Vec3& u, const Vec3& w) { return (w - u).cross(q - u).dot(n); };
  if (side(a, b) >= 0 && side(b, c) >= 0 && side(c, a) >= 0) return (p - q).norm();
  const auto seg = [&](const Vec3& u, const Vec3& w) {
    const double t = std::clamp((p - u).dot(w - u) / (w - u).squaredNorm(), 0.0, 1.0);
    return (p - (u + t * (w - u))).norm();
  };
  return std::min({seg(a, b), seg(b, c), seg(c, a)});
}

inline double mesh_distance_brute(const Mesh& mesh, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.size(); ++t)
    d = std::min(d, point_triangle_distance(p, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2)));
  return d;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-12) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do v = Vec3(n(rng), n(rng), n(rng));
  while (v.squaredNorm() < 1e-12);
  return v.normalized();
}

inline Image random_image(int c, int h, int w, std::mt19937_64& rng, double scale = 1.0) {
  Image img(c, h, w);
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : img.data) v = n(rng);
  return img;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("lnrf_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// A compact field for tests: small tables and a narrow MLP.
inline FieldConfig small_field_config() {
  FieldConfig c;
  c.levels = 4;
  c.features = 2;
  c.log2_table = 10;
  c.base_resolution = 4;
  c.growth = 2.0;
  c.hidden_layers = 1;
  c.hidden_width = 16;
  return c;
}

}  // namespace lnrf::testing
