#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "lnrf/field/render.hpp"

namespace lnrf {

// Analytic scene of Gaussian density blobs, each with a constant latent
// color. Used to synthesise targets with known ground truth.
struct Blob {
  Vec3 center = Vec3::Zero();
  double radius = 0.3;
  double density = 20.0;
  std::array<double, 4> color{};
};

class BlobScene {
 public:
  explicit BlobScene(std::vector<Blob> blobs, std::array<double, 4> background = {})
      : blobs_(std::move(blobs)), background_(background) {}

  int channels() const { return 4; }
  std::array<double, 4> background() const { return background_; }

  PointSample sample(const Vec3& p) const {
    PointSample s;
    for (const Blob& b : blobs_) {
      const double d = b.density * std::exp(-(p - b.center).squaredNorm() / (2.0 * b.radius * b.radius));
      s.sigma += d;
      for (int c = 0; c < 4; ++c) s.color[c] += d * b.color[c];
    }
    if (s.sigma > 0.0)
      for (double& c : s.color) c /= s.sigma;
    return s;
  }

  const std::vector<Blob>& blobs() const { return blobs_; }

 private:
  std::vector<Blob> blobs_;
  std::array<double, 4> background_;
};

// Two overlapping blobs with distinct latent colors.
inline BlobScene default_blob_scene() {
  return BlobScene({Blob{Vec3(-0.2, 0.0, 0.0), 0.25, 25.0, {0.8, -0.3, 0.2, -0.5}},
                    Blob{Vec3(0.25, 0.1, 0.1), 0.2, 25.0, {-0.4, 0.6, -0.2, 0.3}}});
}

}  // namespace lnrf
