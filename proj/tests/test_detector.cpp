#include <doctest.h>

#include <cmath>

#include "ndgrad/gradcheck.hpp"
#include "ndgrad/optim.hpp"
#include "shapeseg/detector.hpp"
#include "shapeseg/shapes.hpp"
#include "testutil.hpp"

using namespace shapeseg;
using ndgrad::Rng;
using ndgrad::Tensor;

namespace {

DetectorConfig small_cfg() {
  DetectorConfig cfg;
  cfg.input_h = cfg.input_w = 64;  // 4x4 grid keeps forward cheap
  cfg.s_cell = 16;
  return cfg;
}

ShapePriorModel frozen_prior(uint64_t seed, int latent = 4, int base = 2) {
  Rng rng(seed);
  ShapePriorModel m = build_vae(latent, base, rng);
  freeze_decoder(m);
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("detector");

TEST_CASE("localization net maps 256x256 to a 5-channel 16x16 grid") {
  Rng rng(1);
  LocalizationNet net = build_localization_net(rng);
  Tensor img = Tensor::zeros({1, 1, 256, 256});
  Tensor feats = loc_forward(net, img);
  CHECK(feats.shape() == ndgrad::Shape{1, 5, 16, 16});
}

TEST_CASE("localization net builds deterministically") {
  Rng a(2), b(2);
  LocalizationNet n1 = build_localization_net(a);
  LocalizationNet n2 = build_localization_net(b);
  CHECK(ndgrad::byte_checksum(n1.params()) == ndgrad::byte_checksum(n2.params()));
}

TEST_CASE("param_map at zero features hits the midpoints") {
  DetectorConfig cfg;
  cfg.s_min = 1;
  cfg.s_max = 2;
  cfg.r_max = 3;
  LValues v = param_map_cell(0, 0, 0, 0, 0, cfg);
  CHECK(v.presence == doctest::Approx(0.5));
  CHECK(v.scale == doctest::Approx(1.5));
  CHECK(v.ratio == doctest::Approx(1.0));
  CHECK(v.lx == doctest::Approx(0.0));
  CHECK(v.ly == doctest::Approx(0.0));
}

TEST_CASE("param_map saturates to the ratio limits") {
  DetectorConfig cfg;
  cfg.r_max = 3;
  CHECK(param_map_cell(0, 0, 50, 0, 0, cfg).ratio == doctest::Approx(3.0).epsilon(1e-4));
  CHECK(param_map_cell(0, 0, -50, 0, 0, cfg).ratio == doctest::Approx(1.0 / 3).epsilon(1e-4));
}

TEST_CASE("param_map scale example") {
  DetectorConfig cfg;
  cfg.s_min = 1;
  cfg.s_max = 2;
  const double sig2 = 1.0 / (1.0 + std::exp(-2.0));
  CHECK(param_map_cell(0, 2.0f, 0, 0, 0, cfg).scale == doctest::Approx(sig2 + 1).epsilon(1e-5));
}

TEST_CASE("param_map tensor and scalar paths agree") {
  DetectorConfig cfg;
  Rng rng(3);
  Tensor feats = testutil::rand_tensor({1, 5, 2, 2}, rng, -3, 3);
  GridParams g = param_map(feats, cfg);
  for (int cell = 0; cell < 4; ++cell) {
    LValues v = param_map_cell(feats.at(static_cast<size_t>(cell)), feats.at(4 + cell),
                               feats.at(8 + cell), feats.at(12 + cell), feats.at(16 + cell), cfg);
    CHECK(g.presence.at(static_cast<size_t>(cell)) == doctest::Approx(v.presence));
    CHECK(g.scale.at(static_cast<size_t>(cell)) == doctest::Approx(v.scale));
    CHECK(g.ratio.at(static_cast<size_t>(cell)) == doctest::Approx(v.ratio).epsilon(1e-5));
    CHECK(g.lx.at(static_cast<size_t>(cell)) == doctest::Approx(v.lx));
    CHECK(g.ly.at(static_cast<size_t>(cell)) == doctest::Approx(v.ly));
  }
}

TEST_CASE("param_map ranges survive extreme raw features") {
  DetectorConfig cfg;
  cfg.s_min = 1;
  cfg.s_max = 2;
  cfg.r_max = 1.5;
  Rng rng(4);
  for (int t = 0; t < 2000; ++t) {
    const auto raw = [&] { return static_cast<ndgrad::real>(rng.uniform(-1e6, 1e6)); };
    LValues v = param_map_cell(raw(), raw(), raw(), raw(), raw(), cfg);
    CHECK(v.presence >= 0);
    CHECK(v.presence <= 1);
    CHECK(v.scale >= cfg.s_min);
    CHECK(v.scale <= cfg.s_max);
    CHECK(v.ratio >= 1 / cfg.r_max - 1e-5);
    CHECK(v.ratio <= cfg.r_max + 1e-5);
    CHECK(std::abs(v.lx) <= 0.5);
    CHECK(std::abs(v.ly) <= 0.5);

    stn::BoxParams b = box_from_params(v, 0, 0, cfg);
    CHECK(std::abs(b.o_x) <= 0.5 * cfg.s_cell);
    CHECK(std::abs(b.o_y) <= 0.5 * cfg.s_cell);
    const double gm = std::sqrt(static_cast<double>(b.h_obj) * b.w_obj);
    CHECK(gm == doctest::Approx(v.scale * cfg.s_cell).epsilon(1e-5));
  }
}

TEST_CASE("box_from_params examples") {
  DetectorConfig cfg;
  LValues v{0.9f, 1.5f, 1.0f, 0.0f, 0.0f};
  stn::BoxParams b = box_from_params(v, 0, 0, cfg);
  CHECK(b.h_obj == doctest::Approx(24));
  CHECK(b.w_obj == doctest::Approx(24));
  CHECK(b.o_x == 0);
  CHECK(b.o_y == 0);

  LValues r4{0.9f, 1.5f, 4.0f, 0.0f, 0.0f};
  stn::BoxParams b4 = box_from_params(r4, 0, 0, cfg);
  CHECK(b4.w_obj / b4.h_obj == doctest::Approx(4.0));

  LValues off{0.9f, 1.5f, 1.0f, 0.5f, -0.5f};
  stn::BoxParams bo = box_from_params(off, 0, 0, cfg);
  CHECK(bo.o_x == doctest::Approx(8));
  CHECK(bo.o_y == doctest::Approx(-8));
}

TEST_CASE("edge loss closed-form cases") {
  Tensor g_img = Tensor::full({1, 1, 8, 8}, 1);

  SUBCASE("zero reconstruction scores 1") {
    Tensor zero = Tensor::zeros({1, 1, 8, 8});
    CHECK(edge_loss(g_img, zero, 0.01f).item() == doctest::Approx(1.0));
  }
  SUBCASE("perfect all-ones reconstruction") {
    Tensor ones = Tensor::full({1, 1, 8, 8}, 1);
    CHECK(edge_loss(g_img, ones, 0.01f).item() == doctest::Approx(1.0 - 1.0 / 1.01).epsilon(1e-5));
  }
  SUBCASE("reconstruction without image support is maximally penalized") {
    Tensor zero_img = Tensor::zeros({1, 1, 8, 8});
    Tensor ones = Tensor::full({1, 1, 8, 8}, 1);
    CHECK(edge_loss(zero_img, ones, 0.01f).item() == doctest::Approx(1.0));
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(edge_loss(g_img, Tensor::zeros({1, 1, 4, 4}), 0.01f), std::invalid_argument);
  }
}

TEST_CASE("edge loss stays in [0,1] for random maps") {
  Rng rng(5);
  for (int t = 0; t < 10000; ++t) {
    Tensor a = testutil::rand_tensor({16}, rng, 0, 1);
    Tensor b = testutil::rand_tensor({16}, rng, 0, 1);
    const double l = edge_loss(a, b, 0.01f).item();
    CHECK(l >= 0);
    CHECK(l <= 1);
  }
}

TEST_CASE("edge loss float gradient check") {
  Rng rng(6);
  Tensor g_img = testutil::rand_tensor({1, 1, 8, 8}, rng);
  Tensor g_rec = testutil::rand_tensor({1, 1, 8, 8}, rng, 0.05, 0.95);
  testutil::separate_edge_loss_branches(g_img, g_rec);
  CHECK(ndgrad::grad_check([&](const Tensor& t) { return edge_loss(g_img, t, 0.01f); }, g_rec,
                           3e-3) < 1e-2);
}

TEST_CASE("detector_forward requires a frozen decoder") {
  Rng rng(7);
  ShapePriorModel prior = build_vae(4, 2, rng);  // unfrozen
  LocalizationNet net;                           // unused before the check
  DetectorConfig cfg = small_cfg();
  Tensor img = Tensor::zeros({1, 1, 64, 64});
  CHECK_THROWS_AS(
      detector_forward_features(img, img, Tensor::zeros({1, 5, 4, 4}), prior, cfg, nullptr),
      std::invalid_argument);
  (void)net;
}

TEST_CASE("all-dead presence forces an empty canvas and loss 1") {
  DetectorConfig cfg = small_cfg();
  ShapePriorModel prior = frozen_prior(8);
  Rng rng(9);
  GrayImage scene = testutil::smooth_image(64, 64, rng);
  Tensor img = image_to_tensor(scene);
  Tensor target = image_to_tensor(gradient_target(scene, cfg));

  Tensor feats = Tensor::zeros({1, 5, 4, 4});
  for (int c = 0; c < 16; ++c) feats.data()[c] = -50;  // presence channel -> sigmoid ~ 0
  ForwardResult fr = detector_forward_features(img, target, feats, prior, cfg, nullptr);
  for (size_t i = 0; i < fr.g_rec.size(); ++i) CHECK(std::abs(fr.g_rec.at(i)) < 1e-12);
  CHECK(fr.edge.item() == doctest::Approx(1.0));

  // with every cell dead, the KL term is an empty mean: total == edge
  CHECK(total_loss(fr, 0.1f).item() == doctest::Approx(fr.edge.item()));
}

TEST_CASE("total_loss composes edge and masked KL") {
  DetectorConfig cfg = small_cfg();
  ShapePriorModel prior = frozen_prior(10);
  Rng rng(11);
  GrayImage scene = testutil::smooth_image(64, 64, rng);
  Tensor img = image_to_tensor(scene);
  Tensor target = image_to_tensor(gradient_target(scene, cfg));
  Tensor feats = testutil::rand_tensor({1, 5, 4, 4}, rng, -1, 1);
  ForwardResult fr = detector_forward_features(img, target, feats, prior, cfg, nullptr);

  const double edge = fr.edge.item();
  const double t0 = total_loss(fr, 0).item();
  const double t1 = total_loss(fr, 0.01f).item();
  const double t2 = total_loss(fr, 0.02f).item();
  CHECK(t0 == doctest::Approx(edge));
  CHECK(t2 - t0 == doctest::Approx(2 * (t1 - t0)).epsilon(1e-3));
}

TEST_CASE("canvas has the input shape and a correct box beats a shifted one") {
  DetectorConfig cfg = small_cfg();
  cfg.s_min = 1.0;
  cfg.s_max = 2.0;
  ShapePriorModel prior = frozen_prior(12, 4, 2);

  // scene with one bright disk centered in cell (1,1)
  SceneConfig sc;
  sc.size = 64;
  sc.s_cell = 16;
  Rng srng(13);
  SceneSample scene = gen_toy_scene(1, sc, srng);
  GrayImage pre = preprocess_image(scene.image, cfg);
  Tensor img = image_to_tensor(pre);
  Tensor target = image_to_tensor(gradient_target(pre, cfg));

  REQUIRE(scene.meta.size() == 1);
  const auto& m = scene.meta[0];
  const double cx = (m.x0 + m.x1) / 2.0, cy = (m.y0 + m.y1) / 2.0;
  const int col = std::clamp(static_cast<int>(cx) / 16, 0, 3);
  const int row = std::clamp(static_cast<int>(cy) / 16, 0, 3);

  auto forward_with_box = [&](double dx_px) {
    Tensor feats = Tensor::zeros({1, 5, 4, 4});
    for (int c = 0; c < 16; ++c) feats.data()[c] = -50;  // all cells off
    const int cell = row * 4 + col;
    feats.data()[cell] = 50;  // presence ~ 1 at the object cell
    // offset feature moves the box center: lx = 0.5*tanh(f)
    const double want = std::clamp((cx + dx_px - (col + 0.5) * 16) / 16.0, -0.49, 0.49);
    feats.data()[3 * 16 + cell] = static_cast<ndgrad::real>(std::atanh(2 * want));
    ForwardResult fr = detector_forward_features(img, target, feats, prior, cfg, nullptr);
    CHECK(fr.g_rec.shape() == ndgrad::Shape{1, 1, 64, 64});
    return fr.edge.item();
  };

  const double centered = forward_with_box(0);
  const double shifted = forward_with_box(8);
  CHECK(centered < shifted);
}

TEST_CASE("gradients reach the localization net through the sampler") {
  DetectorConfig cfg = small_cfg();
  cfg.input_h = cfg.input_w = 64;
  ShapePriorModel prior = frozen_prior(14);
  Rng rng(15);
  // a 64x64 image cannot feed the full 4-pool net; use 256 here
  cfg.input_h = cfg.input_w = 256;
  LocalizationNet net = build_localization_net(rng);
  GrayImage scene = testutil::smooth_image(256, 256, rng);
  Tensor img = image_to_tensor(scene);
  Tensor target = image_to_tensor(gradient_target(scene, cfg));
  Rng noise(16);
  ForwardResult fr = detector_forward(img, target, net, prior, cfg, &noise);
  ndgrad::backward(total_loss(fr, cfg.beta_kl));

  double norm = 0;
  for (const Tensor& p : net.params()) {
    REQUIRE(p.has_grad());
    for (ndgrad::real g : p.grad()) norm += static_cast<double>(g) * g;
  }
  CHECK(norm > 0);
}

TEST_CASE("train_detector refuses an unfrozen decoder") {
  Rng rng(17);
  DetectorModel model;
  model.prior = build_vae(4, 2, rng);
  model.loc = build_localization_net(rng);
  model.cfg = DetectorConfig{};
  SceneConfig sc;
  Rng srng(18);
  std::vector<SceneSample> scenes{gen_toy_scene(2, sc, srng)};
  Rng trng(19);
  CHECK_THROWS_AS(train_detector(model, scenes, trng), std::invalid_argument);
}

TEST_CASE("one short detector run: decoder frozen, loss finite, reproducible") {
  SceneConfig sc;
  Rng srng(20);
  std::vector<SceneSample> scenes;
  for (int i = 0; i < 2; ++i) scenes.push_back(gen_toy_scene(4, sc, srng));

  auto run = [&](uint64_t seed) {
    DetectorModel model;
    Rng prng(21);
    model.prior = build_vae(4, 2, prng);
    freeze_decoder(model.prior);
    Rng lrng(22);
    model.loc = build_localization_net(lrng);
    model.cfg = DetectorConfig{};
    model.cfg.epochs = 1;
    model.cfg.batch_size = 2;
    const uint64_t dec = model.prior.decoder_checksum();
    Rng trng(seed);
    auto history = train_detector(model, scenes, trng);
    CHECK(model.prior.decoder_checksum() == dec);
    REQUIRE(history.size() == 1);
    CHECK(std::isfinite(history[0].edge_loss));
    return history[0].edge_loss;
  };
  CHECK(run(23) == run(23));
}

TEST_CASE("detector container round trip") {
  Rng rng(24);
  DetectorModel model;
  model.prior = frozen_prior(25);
  model.loc = build_localization_net(rng);
  model.cfg = DetectorConfig{};
  model.cfg.s_max = 2.5;
  save_detector("/tmp/shapeseg_det_test.w", model);
  DetectorModel l = load_detector("/tmp/shapeseg_det_test.w");
  CHECK(l.cfg.s_max == doctest::Approx(2.5));
  CHECK(l.prior.frozen_decoder);
  CHECK(l.prior.decoder_checksum() == model.prior.decoder_checksum());
  CHECK(ndgrad::byte_checksum(l.loc.params()) == ndgrad::byte_checksum(model.loc.params()));
}

TEST_SUITE_END();
