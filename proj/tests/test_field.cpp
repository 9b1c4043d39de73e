#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace lnrf;
using lnrf::testing::small_field_config;

namespace {

FieldConfig one_level(int res) {
  FieldConfig c = small_field_config();
  c.levels = 1;
  c.base_resolution = res;
  return c;
}

FieldParams with_random_table(FieldConfig cfg, std::uint64_t seed) {
  FieldParams p = init_field(cfg, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& v : p.hash) v = n(rng);
  return p;
}

// Rotation about +y by `a`, the same motion that adds `a` to an orbit
// camera's azimuth.
Vec3 rotate_y(const Vec3& p, double a) {
  return Vec3(p.x() * std::cos(a) + p.z() * std::sin(a), p.y(), -p.x() * std::sin(a) + p.z() * std::cos(a));
}

}  // namespace

TEST(HashEncode, GridCornerIsVerbatim) {
  const FieldParams p = with_random_table(small_field_config(), 1);
  const auto feat = hash_encode(p, Vec3(-1, -1, -1));
  const auto& c = p.config;
  for (int l = 0; l < c.levels; ++l) {
    const std::size_t row = std::size_t(l) * c.table_size() + (spatial_hash(0, 0, 0) & (c.table_size() - 1));
    for (int f = 0; f < c.features; ++f) EXPECT_EQ(feat[l * c.features + f], p.hash[row * c.features + f]);
  }
  // An interior lattice point of a single level.
  const FieldParams q = with_random_table(one_level(4), 2);
  const auto f2 = hash_encode(q, Vec3(-0.5, 0.0, 0.5));  // lattice (1, 2, 3)
  const std::size_t row = spatial_hash(1, 2, 3) & (q.config.table_size() - 1);
  EXPECT_NEAR(f2[0], q.hash[row * 2], 1e-15);
  EXPECT_NEAR(f2[1], q.hash[row * 2 + 1], 1e-15);
}

TEST(HashEncode, CellCenterIsCornerMean) {
  const FieldParams p = with_random_table(one_level(4), 3);
  // Lattice coordinate 1.5 on every axis.
  const double x = -1.0 + 2.0 * 1.5 / 4.0;
  const auto feat = hash_encode(p, Vec3(x, x, x));
  const std::uint32_t mask = p.config.table_size() - 1;
  for (int f = 0; f < 2; ++f) {
    double mean = 0.0;
    for (int k = 0; k < 8; ++k)
      mean += p.hash[std::size_t(spatial_hash(1 + (k & 1), 1 + ((k >> 1) & 1), 1 + ((k >> 2) & 1)) & mask) * 2 + f];
    EXPECT_NEAR(feat[f], mean / 8.0, 1e-14);
  }
}

TEST(HashEncode, TableGradientMatchesFiniteDifference) {
  FieldParams p = with_random_table(small_field_config(), 4);
  const Vec3 x(0.31, -0.27, 0.66);
  FieldEvaluator ev(p);
  ev.sample(x);
  FieldParams g = zeros_like(p);
  const std::array<double, 4> dcol{0.2, -0.4, 0.7, 0.1};
  ev.backward(0.5, dcol, g);
  const auto objective = [&](const FieldParams& q) {
    FieldEvaluator e(q);
    const PointSample s = e.sample(x);
    double v = 0.5 * s.sigma;
    for (int c = 0; c < 4; ++c) v += dcol[c] * s.color[c];
    return v;
  };
  HashLookup lk;
  hash_lookup(p.config, x, lk);
  for (int l = 0; l < p.config.levels; ++l) {
    const std::size_t idx = std::size_t(lk.index[l][3]) * p.config.features;
    const double saved = p.hash[idx];
    const double h = 1e-4;
    p.hash[idx] = saved + h;
    const double up = objective(p);
    p.hash[idx] = saved - h;
    const double down = objective(p);
    p.hash[idx] = saved;
    EXPECT_LT(lnrf::testing::relative_error(g.hash[idx], (up - down) / (2 * h), 1e-9), 1e-4) << "level " << l;
  }
}

TEST(FieldEval, ZeroHeadGivesBiasDensity) {
  FieldParams p = init_field(small_field_config(), 5);
  std::fill(p.mlp.back().weight.begin(), p.mlp.back().weight.end(), 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    const FieldValue v = field_eval(p, Vec3(u(rng), u(rng), u(rng)));
    EXPECT_DOUBLE_EQ(v.sigma, softplus(p.config.density_bias));
    for (double c : v.latent) EXPECT_EQ(c, 0.0);
  }
}

TEST(FieldEval, WeightGradientMatchesFiniteDifference) {
  FieldParams p = with_random_table(small_field_config(), 6);
  const Vec3 x(-0.2, 0.45, 0.1);
  FieldEvaluator ev(p);
  ev.sample(x);
  FieldParams g = zeros_like(p);
  ev.backward(1.0, {}, g);
  for (std::size_t layer = 0; layer < p.mlp.size(); ++layer)
    for (std::size_t i : {std::size_t(0), std::size_t(7)}) {
      double& w = p.mlp[layer].weight[i];
      const double saved = w, h = 1e-5;
      w = saved + h;
      const double up = field_eval(p, x).sigma;
      w = saved - h;
      const double down = field_eval(p, x).sigma;
      w = saved;
      EXPECT_LT(lnrf::testing::relative_error(g.mlp[layer].weight[i], (up - down) / (2 * h), 1e-10), 1e-4);
    }
}

TEST(FieldEval, PureAndDeterministic) {
  const FieldParams p = with_random_table(small_field_config(), 7);
  const Vec3 x(0.1, 0.2, 0.3);
  const FieldValue a = field_eval(p, x), b = field_eval(p, x);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.latent, b.latent);
  EXPECT_EQ(init_field(small_field_config(), 9).hash, init_field(small_field_config(), 9).hash);
}

TEST(FieldEval, NonFiniteParametersDetected) {
  FieldParams p = init_field(small_field_config(), 8);
  p.mlp.back().bias[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(p.all_finite());
  EXPECT_THROW(field_eval(p, Vec3::Zero()), NumericError);
}

TEST(FieldEval, InitialParametersAreF32) {
  const FieldParams p = init_field(small_field_config(), 10);
  p.for_each_tensor([](const std::string& name, std::span<const double> d, const auto&, ParamGroup) {
    for (double v : d) ASSERT_EQ(v, round_f32(v)) << name;
  });
}

TEST(Render, EmptySceneIsBackground) {
  const BlobScene empty({}, {0.1, -0.2, 0.3, -0.4});
  const Camera cam = orbit_camera(0.3, 0.2, 2.5, deg_to_rad(60.0), 8);
  const RenderOutput out = render_view(empty, cam, RenderConfig{});
  for (std::size_t pix = 0; pix < out.image.pixels(); ++pix) {
    EXPECT_EQ(out.w_blend[pix], 0.0);
    for (int c = 0; c < 4; ++c) EXPECT_EQ(out.image.at(c, pix), empty.background()[c]);
  }
}

TEST(Render, TwoSampleWeights) {
  const double sd[2] = {std::log(2.0), std::log(2.0)};
  double w[2];
  const double t_end = composite_weights(sd, 2, w);
  EXPECT_NEAR(w[0], 0.5, 1e-15);
  EXPECT_NEAR(w[1], 0.25, 1e-15);
  EXPECT_NEAR(t_end, 0.25, 1e-15);
}

TEST(Render, TransmittanceConservation) {
  const FieldParams p = with_random_table(small_field_config(), 11);
  RenderConfig rc;
  rc.steps = 32;
  const RenderOutput out = render_view(p, orbit_camera(1.0, 0.4, 2.2, deg_to_rad(60.0), 12), rc);
  EXPECT_LE(out.max_conservation_error, 1e-12);
  const BlobScene scene = default_blob_scene();
  const RenderOutput blobs = render_view(scene, orbit_camera(0.0, 0.0, 2.5, deg_to_rad(60.0), 12), rc);
  EXPECT_LE(blobs.max_conservation_error, 1e-12);
  for (double wb : blobs.w_blend) {
    EXPECT_GE(wb, 0.0);
    EXPECT_LE(wb, 1.0);
  }
}

TEST(Render, BackgroundConsistency) {
  BlobScene scene = default_blob_scene();
  const BlobScene with_bg(scene.blobs(), {0.5, -0.5, 0.25, 0.0});
  const RenderOutput out = render_view(with_bg, orbit_camera(0.5, 0.1, 2.5, deg_to_rad(60.0), 16), RenderConfig{});
  double max_c = 0.0;
  for (const Blob& b : scene.blobs())
    for (double c : b.color) max_c = std::max(max_c, std::abs(c));
  for (std::size_t pix = 0; pix < out.image.pixels(); ++pix)
    for (int c = 0; c < 4; ++c) {
      const double fg = out.image.at(c, pix) - (1.0 - out.w_blend[pix]) * with_bg.background()[c];
      EXPECT_LE(std::abs(fg), out.w_blend[pix] * max_c + 1e-12);
    }
}

TEST(Render, AzimuthEquivariance) {
  const double a = 0.9;
  const BlobScene base({Blob{Vec3(0.15, 0.05, -0.1), 0.2, 30.0, {0.5, -0.2, 0.3, 0.1}},
                        Blob{Vec3(-0.2, -0.1, 0.15), 0.18, 20.0, {-0.3, 0.4, 0.0, 0.6}}});
  std::vector<Blob> turned = base.blobs();
  for (Blob& b : turned) b.center = rotate_y(b.center, a);
  const BlobScene rotated(turned);
  // The box clip is not rotation invariant; keep the Gaussian tails well inside it.
  RenderConfig rc;
  rc.steps = 1024;
  rc.bound = 2.0;
  const RenderOutput x = render_view(base, orbit_camera(0.4, 0.3, 2.5, deg_to_rad(50.0), 8), rc);
  const RenderOutput y = render_view(rotated, orbit_camera(0.4 + a, 0.3, 2.5, deg_to_rad(50.0), 8), rc);
  for (std::size_t i = 0; i < x.image.size(); ++i) EXPECT_NEAR(x.image.data[i], y.image.data[i], 1e-4);
}

TEST(Render, RejectsTooFewSteps) {
  RenderConfig rc;
  rc.steps = 1;
  EXPECT_THROW(render_view(init_field(small_field_config(), 1), orbit_camera(0, 0, 2), rc), ConfigError);
}

TEST(Occupancy, ClosedForms) {
  const double dref = 2.0 / 64.0;
  EXPECT_EQ(occupancy_from_sigma(0.0, dref), 0.0);
  EXPECT_EQ(occupancy_from_sigma(1e6, dref), 1.0);
  EXPECT_NEAR(occupancy_from_sigma(std::log(2.0) / dref, dref), 0.5, 1e-15);
  const FieldParams p = init_field(small_field_config(), 12);
  const double occ = point_occupancy(p, Vec3(0.1, 0.1, 0.1), dref);
  EXPECT_GT(occ, 0.0);
  EXPECT_LT(occ, 1.0);
}

TEST(Camera, SampleIsDeterministic) {
  CameraConfig cfg;
  std::mt19937_64 a(42), b(42);
  const Camera x = sample_camera(a, cfg), y = sample_camera(b, cfg);
  EXPECT_EQ(x.position, y.position);
  EXPECT_EQ(x.azimuth, y.azimuth);
  EXPECT_EQ(x.look_at, Vec3::Zero());
}

TEST(Camera, AzimuthHistogramIsUniform) {
  CameraConfig cfg;
  std::mt19937_64 rng(43);
  const int n = 10000, bins = 10;
  std::array<int, bins> hist{};
  for (int i = 0; i < n; ++i) {
    const Camera c = sample_camera(rng, cfg);
    ASSERT_GE(c.azimuth, 0.0);
    ASSERT_LT(c.azimuth, 2 * kPi);
    ++hist[std::min(bins - 1, int(c.azimuth / (2 * kPi) * bins))];
  }
  const double expect = double(n) / bins, sd = std::sqrt(n * 0.1 * 0.9);
  for (int h : hist) EXPECT_LE(std::abs(h - expect), 3 * sd);
}

TEST(Camera, DegenerateElevationStaysOnEquator) {
  CameraConfig cfg;
  cfg.elevation_min = cfg.elevation_max = 0.0;
  std::mt19937_64 rng(44);
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(sample_camera(rng, cfg).position.y(), 0.0, 1e-15);
}

TEST(Camera, InvalidCameraRejected) {
  Camera c;
  c.look_at = c.position;
  EXPECT_THROW(c.validate(), ConfigError);
  Camera d;
  d.fov_y = kPi;
  EXPECT_THROW(d.validate(), ConfigError);
}
