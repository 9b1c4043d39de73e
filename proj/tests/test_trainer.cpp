#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "stub_server.hpp"
#include "support.hpp"

using namespace lnrf;
using lnrf::testing::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const Checkpoint& ck) { return serialize(to_table(ck)); }

// Tiny Dirac run: two fixed views of the blob scene at 8x8.
TrainConfig tiny_config(const TempDir& dir, TrainMode mode = TrainMode::latent_nerf) {
  const int res = 8;
  RenderConfig rcfg;
  rcfg.steps = 8;
  BlobScene scene = default_blob_scene();
  std::vector<Image> images;
  std::vector<Camera> cams;
  for (int v = 0; v < 2; ++v) {
    cams.push_back(orbit_camera(kPi * v, 0.2, 2.5, deg_to_rad(60.0), res));
    Image im = render_view(scene, cams.back(), rcfg).image;
    images.push_back(mode == TrainMode::refine ? latent_preview(im) : im);
  }
  write_tensor_file(dir / "targets.lnrf", target_table(images, cams));
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.denoiser = DenoiserKind::dirac;
  cfg.target = dir / "targets.lnrf";
  cfg.prompt = "blobs";
  cfg.iterations = 4;
  cfg.camera.resolution = res;
  cfg.render.steps = 8;
  cfg.field = lnrf::testing::small_field_config();
  return cfg;
}

Mesh unit_cube() {
  Mesh m;
  for (int i = 0; i < 8; ++i) m.vertices.emplace_back(i & 1 ? 0.5 : -0.5, i & 2 ? 0.5 : -0.5, i & 4 ? 0.5 : -0.5);
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0, 0.5}, m(3, 0.0), v(3, 0.0);
  const std::vector<double> g{0.3, -4.0, 0.0};
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.store_f32 = false;
  adam_step(p, g, m, v, 1, cfg);
  EXPECT_NEAR(p[0], 0.99, 1e-13);
  EXPECT_NEAR(p[1], -1.99, 1e-13);
  EXPECT_EQ(p[2], 0.5);
}

TEST(Adam, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(5), m(5, 0.0), v(5, 0.0);
  for (double& x : p) x = n(rng);
  auto rp = p, rm = m, rv = v;
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.store_f32 = false;
  for (long step = 1; step <= 20; ++step) {
    std::vector<double> g(5);
    for (double& x : g) x = n(rng);
    adam_step(p, g, m, v, step, cfg);
    for (int i = 0; i < 5; ++i) {
      rm[i] = 0.9 * rm[i] + 0.1 * g[i];
      rv[i] = 0.99 * rv[i] + 0.01 * g[i] * g[i];
      const double mh = rm[i] / (1 - std::pow(0.9, step)), vh = rv[i] / (1 - std::pow(0.99, step));
      rp[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-15);
    }
  }
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(p[i], rp[i], 1e-13);
}

TEST(Adam, StoresBinary32AndHonoursMask) {
  std::vector<double> p{0.1, 0.2}, m(2, 0.0), v(2, 0.0);
  const std::vector<double> g{1.0 / 3.0, 1.0 / 7.0};
  const std::vector<unsigned char> mask{1, 0};
  adam_step(p, g, m, v, 1, AdamConfig{}, "x", mask);
  EXPECT_EQ(p[0], round_f32(p[0]));
  EXPECT_EQ(m[0], round_f32(m[0]));
  EXPECT_EQ(v[0], round_f32(v[0]));
  EXPECT_EQ(p[1], 0.2);
  EXPECT_EQ(m[1], 0.0);
}

TEST(Adam, Errors) {
  std::vector<double> p(2), m(2), v(2), g(2);
  std::vector<double> short_m(1);
  EXPECT_THROW(adam_step(p, g, short_m, v, 1, {}), ShapeError);
  EXPECT_THROW(adam_step(p, g, m, v, 0, {}), ConfigError);
  g[1] = std::numeric_limits<double>::infinity();
  try {
    adam_step(p, g, m, v, 1, {}, "field.hash");
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("field.hash"), std::string::npos);
  }
}

TEST(TensorFile, RoundTripAndCorruption) {
  TensorTable t;
  t.add("a", {2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6.5});
  t.add("meta.big", {4}, encode_u64(0xfedcba9876543210ULL));
  const auto bytes = serialize(t);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 9), "LNRF-CKPT");
  const TensorTable back = deserialize(bytes);
  EXPECT_EQ(back.get("a").dims, (std::vector<std::uint64_t>{2, 3}));
  EXPECT_EQ(back.get("a").data[5], 6.5f);
  EXPECT_EQ(decode_u64(back.get("meta.big")), 0xfedcba9876543210ULL);
  EXPECT_THROW(back.get("missing"), ParseError);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), ParseError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(deserialize(bad), ParseError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize(bad), ParseError);
  bad = bytes;
  bad[9] = 7;  // version
  EXPECT_THROW(deserialize(bad), ParseError);
  EXPECT_THROW(t.add("c", {3}, std::vector<double>{1, 2}), ShapeError);
}

TEST(TensorFile, FilesOnDisk) {
  TempDir dir("tensor_file");
  TensorTable t;
  t.add("x", {1}, std::vector<double>{3.0});
  write_tensor_file(dir / "sub/t.lnrf", t);
  EXPECT_EQ(read_tensor_file(dir / "sub/t.lnrf").get("x").data[0], 3.0f);
  EXPECT_FALSE(std::filesystem::exists(dir / "sub/t.lnrf.tmp"));
  EXPECT_THROW(read_tensor_file(dir / "nope.lnrf"), IoError);
  std::ofstream(dir / "junk.lnrf") << "hello";
  try {
    read_tensor_file(dir / "junk.lnrf");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.lnrf"), std::string::npos);
  }
}

TEST(Checkpoint, FieldAndPaintRoundTripBitwise) {
  Checkpoint ck;
  ck.mode = TrainMode::sketch;
  ck.iteration = 77;
  ck.seed = 1ULL << 40;
  ck.config_hash = 0x0123456789abcdefULL;
  FieldOptimizer opt(init_field(lnrf::testing::small_field_config(), 2));
  opt.step = 77;
  opt.m.hash[3] = round_f32(0.125);
  ck.field = opt;
  const Checkpoint back = from_table(deserialize(bytes_of(ck)));
  EXPECT_EQ(back.mode, TrainMode::sketch);
  EXPECT_EQ(back.iteration, 77u);
  EXPECT_EQ(back.seed, ck.seed);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  ASSERT_TRUE(back.field);
  EXPECT_EQ(back.field->params.hash, opt.params.hash);
  EXPECT_EQ(back.field->m.hash, opt.m.hash);
  EXPECT_EQ(back.field->step, 77);
  EXPECT_EQ(bytes_of(back), bytes_of(ck));

  Checkpoint pk;
  pk.mode = TrainMode::paint;
  pk.paint = PaintState(random_texture(8, 8, 3));
  pk.paint->step = 5;
  const Checkpoint pback = from_table(deserialize(bytes_of(pk)));
  ASSERT_TRUE(pback.paint);
  EXPECT_EQ(pback.paint->texture.data, pk.paint->texture.data);
  EXPECT_EQ(pback.paint->step, 5);
}

TEST(DirectionPrompt, Sectors) {
  const auto at = [](double az_deg, double el_deg) {
    return direction_prompt("a cat", orbit_camera(deg_to_rad(az_deg), deg_to_rad(el_deg), 2.0));
  };
  EXPECT_EQ(at(0, 0), "a cat, front view");
  EXPECT_EQ(at(-30, 10), "a cat, front view");
  EXPECT_EQ(at(330, 10), "a cat, front view");
  EXPECT_EQ(at(180, 0), "a cat, back view");
  EXPECT_EQ(at(200, 0), "a cat, back view");
  EXPECT_EQ(at(90, 0), "a cat, side view");
  EXPECT_EQ(at(270, 30), "a cat, side view");
  EXPECT_EQ(at(0, 70), "a cat, overhead view");
}

TEST(Targets, RoundTripAndShapeChecks) {
  TempDir dir("targets");
  std::mt19937_64 rng(4);
  const std::vector<Image> imgs = {lnrf::testing::random_image(4, 8, 8, rng), lnrf::testing::random_image(4, 8, 8, rng)};
  const std::vector<Camera> cams = {orbit_camera(0.5, 0.1, 2.0, deg_to_rad(60.0), 8),
                                    orbit_camera(2.5, 0.3, 2.2, deg_to_rad(60.0), 8)};
  write_tensor_file(dir / "t.lnrf", target_table(imgs, cams));
  CameraConfig cc;
  cc.resolution = 8;
  const TargetSet set = load_targets(dir / "t.lnrf", cc);
  ASSERT_EQ(set.images.size(), 2u);
  ASSERT_EQ(set.cameras.size(), 2u);
  for (std::size_t i = 0; i < imgs[1].size(); ++i) EXPECT_EQ(set.images[1].data[i], round_f32(imgs[1].data[i]));
  EXPECT_LT((set.cameras[1].position - cams[1].position).norm(), 1e-6);
  EXPECT_THROW(target_table({}), ShapeError);
  EXPECT_THROW(target_table(imgs, {cams[0]}), ShapeError);
  EXPECT_THROW(target_table({imgs[0], Image(4, 4, 4)}), ShapeError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.resolved_iterations(), 5000);
  c.mode = TrainMode::paint;
  EXPECT_EQ(c.resolved_iterations(), 2000);
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.mode = TrainMode::sketch;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.mode = TrainMode::refine;
  EXPECT_EQ(c.resolved_iterations(), 1000);
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.denoiser = DenoiserKind::dirac;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_mlp = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.weights.sigma_s = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, HashTracksTrajectorySettings) {
  TrainConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  b.weights.lambda_sparse *= 2.0;
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.out_dir = "/elsewhere";
  b.iterations = 99;
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(ConfigFile, ParsesTablesAndTypes) {
  std::istringstream in(
      "# run settings\n"
      "prompt = \"a \\\"hat\\\" # not a comment\"\n"
      "iters = 12\n"
      "jitter = false\n"
      "\n"
      "[optim]\n"
      "lr_hash = 2.5e-3   # trailing comment\n"
      "[camera]\n"
      "elevation_max_deg = 45\n");
  const ConfigMap map = parse_config(in);
  EXPECT_EQ(std::get<std::string>(map.at("prompt")), "a \"hat\" # not a comment");
  EXPECT_EQ(std::get<double>(map.at("optim.lr_hash")), 2.5e-3);
  TrainConfig cfg;
  apply_config(cfg, map);
  EXPECT_EQ(cfg.iterations, 12);
  EXPECT_FALSE(cfg.jitter);
  EXPECT_EQ(cfg.lr_hash, 2.5e-3);
  EXPECT_NEAR(cfg.camera.elevation_max, deg_to_rad(45.0), 1e-15);
}

TEST(ConfigFile, ErrorsNameTheLine) {
  const auto error_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      TrainConfig cfg;
      apply_config(cfg, parse_config(in, "run.cfg"));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(error_of("seed = 1\nbogus line\n").find("run.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("[optim\n").find("run.cfg:1"), std::string::npos);
  EXPECT_NE(error_of("x = \"open\n").find("unterminated"), std::string::npos);
  EXPECT_NE(error_of("colour = 3\n").find("unknown config key 'colour'"), std::string::npos);
  EXPECT_NE(error_of("iters = 2.5\n").find("integer"), std::string::npos);
  EXPECT_NE(error_of("jitter = 1\n").find("true or false"), std::string::npos);
  EXPECT_NE(error_of("denoiser = \"magic\"\n").find("unknown denoiser"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Train, DiracRunLogsAndCheckpoints) {
  TempDir dir("train_dirac");
  TrainConfig cfg = tiny_config(dir);
  cfg.out_dir = dir / "out";
  cfg.checkpoint_every = 2;
  std::vector<MetricsRecord> recs;
  std::ostringstream log;
  const Checkpoint ck = train(cfg, nullptr, {&log, &recs});
  EXPECT_EQ(ck.iteration, 4u);
  ASSERT_EQ(recs.size(), 4u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].iteration, i);
    EXPECT_LE(recs[i].conservation, 1e-12);
    EXPECT_TRUE(std::isfinite(recs[i].total));
  }
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("iteration").get<int>(), n++);
  }
  EXPECT_EQ(n, 4);
  EXPECT_TRUE(std::filesystem::exists(dir / "out/checkpoint.lnrf"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out/checkpoint_000002.lnrf"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out/checkpoint_000004.lnrf"));
  EXPECT_EQ(bytes_of(load_checkpoint(dir / "out/checkpoint.lnrf")), bytes_of(ck));
}

TEST(Train, ResumeChecks) {
  TempDir dir("train_resume");
  TrainConfig cfg = tiny_config(dir);
  cfg.iterations = 2;
  const Checkpoint ck = train(cfg);
  TrainConfig other = cfg;
  other.seed = 9;
  EXPECT_THROW(train(other, &ck), ConfigError);
  TrainConfig mode = cfg;
  mode.mode = TrainMode::sketch;
  save_obj(dir / "cube.obj", unit_cube());
  mode.sketch_mesh = dir / "cube.obj";
  EXPECT_THROW(train(mode, &ck), ConfigError);
  // Resuming at the end is a no-op.
  EXPECT_EQ(bytes_of(train(cfg, &ck)), bytes_of(ck));
}

TEST(Train, SketchModeReportsSketchLoss) {
  TempDir dir("train_sketch");
  save_obj(dir / "cube.obj", unit_cube());
  TrainConfig cfg = tiny_config(dir, TrainMode::sketch);
  cfg.sketch_mesh = dir / "cube.obj";
  cfg.sketch_extra_samples = 16;
  std::vector<MetricsRecord> recs;
  train(cfg, nullptr, {nullptr, &recs});
  ASSERT_EQ(recs.size(), 4u);
  for (const auto& r : recs) EXPECT_GT(r.sketch, 0.0);
}

TEST(Train, PaintWritesTexturedMesh) {
  TempDir dir("train_paint");
  Mesh m = unit_cube();
  save_obj(dir / "cube.obj", m);  // no UVs: the naive atlas is used
  TrainConfig cfg = tiny_config(dir);
  cfg.mode = TrainMode::paint;
  cfg.paint_mesh = dir / "cube.obj";
  cfg.texture_size = 16;
  cfg.out_dir = dir / "out";
  const Checkpoint ck = train(cfg);
  ASSERT_TRUE(ck.paint);
  EXPECT_EQ(ck.paint->step, 4);
  const Mesh back = load_obj(dir / "out/textured.obj");
  EXPECT_TRUE(back.has_uvs());
  EXPECT_EQ(read_png(dir / "out/textured.png").height, 16);
}

TEST(Train, RefineFromLatentCheckpoint) {
  TempDir dir("train_refine");
  TrainConfig base = tiny_config(dir);
  base.iterations = 2;
  save_checkpoint(dir / "latent.lnrf", train(base));
  TrainConfig cfg = tiny_config(dir, TrainMode::refine);
  cfg.init_checkpoint = dir / "latent.lnrf";
  cfg.iterations = 2;
  const Checkpoint ck = train(cfg);
  ASSERT_TRUE(ck.field);
  EXPECT_TRUE(ck.field->params.rgb_mode());
  // A latent (4-channel) target is rejected for an RGB field.
  TrainConfig wrong = cfg;
  wrong.target = base.target;
  tiny_config(dir);  // rewrite latent targets
  EXPECT_THROW(train(wrong), ConfigError);
}

TEST(Train, BridgeFailuresSurface) {
  TempDir dir("train_bridge");
  TrainConfig cfg = tiny_config(dir);
  cfg.denoiser = DenoiserKind::external;
  std::string endpoint;
  {
    lnrf::testing::StubServer s;
    endpoint = s.endpoint();
  }
  cfg.endpoint = endpoint;
  EXPECT_THROW(train(cfg), BridgeError);

  // The stub only accepts 64x64 latents, so an 8x8 render fails mid-run
  // with the request id and the iteration in the message.
  lnrf::testing::StubServer stub;
  cfg.endpoint = stub.endpoint();
  try {
    train(cfg);
    FAIL();
  } catch (const BridgeError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
    EXPECT_EQ(e.request_id(), 2u);
  }
}

TEST(Turntable, WritesOneImagePerView) {
  TempDir dir("turntable");
  const FieldParams p = init_field(lnrf::testing::small_field_config(), 5);
  RenderConfig r;
  r.steps = 8;
  const auto files = render_turntable(p, 3, dir.path(), nullptr, deg_to_rad(15.0), 2.5, 8, r);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[2].filename(), "view_002.png");
  EXPECT_EQ(read_png(files[0].string()).width, 8);
  EXPECT_THROW(render_turntable(p, 0, dir.path()), ConfigError);
}
