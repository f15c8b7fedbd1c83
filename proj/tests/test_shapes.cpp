#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "shapeseg/imgproc.hpp"
#include "shapeseg/shapes.hpp"
#include "testutil.hpp"

using namespace shapeseg;
using ndgrad::Rng;
using testutil::foreground_area;
using testutil::patch_iou;

namespace {

// tight foreground bounds at threshold 0.5
struct Bounds {
  int x0 = 1 << 20, y0 = 1 << 20, x1 = -1, y1 = -1;
};

Bounds fg_bounds(const ShapePatch& p) {
  Bounds b;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x)
      if (p.at(y, x) > 0.5f) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  return b;
}

}  // namespace

TEST_SUITE_BEGIN("shapes");

TEST_CASE("a circle patch is 4-fold symmetric up to rasterization") {
  Rng rng(1);
  ShapePatch p = gen_ellipse_patch(1.0, 0.0, 0.8, rng);
  ShapePatch rot(p.height, p.width);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) rot.at(y, x) = p.at(p.width - 1 - x, y);  // 90 degrees
  CHECK(patch_iou(p, rot) >= 0.9);
}

TEST_CASE("ratio-2 ellipse at angle 0 has a 2:1 bounding box") {
  Rng rng(2);
  ShapePatch p = gen_ellipse_patch(2.0, 0.0, 0.8, rng);
  Bounds b = fg_bounds(p);
  const int w = b.x1 - b.x0 + 1, h = b.y1 - b.y0 + 1;
  CHECK(std::abs(w - 2 * h) <= 2);  // +-1 px on each measure
}

TEST_CASE("ellipse area is close to pi*a*b") {
  Rng rng(3);
  ShapePatch p = gen_ellipse_patch(1.5, 30.0, 0.8, rng);
  const double a = 0.8 * kPatchSize / 2.0, b = a / 1.5;
  const double analytic = 3.14159265 * a * b;
  double area = 0;
  for (float v : p.data) area += v;  // coverage integrates subpixel area
  CHECK(area == doctest::Approx(analytic).epsilon(0.10));
}

TEST_CASE("gen_ellipse_patch validates its ranges") {
  Rng rng(4);
  CHECK_THROWS_AS(gen_ellipse_patch(0.5, 0, 0.8, rng), std::invalid_argument);
  CHECK_THROWS_AS(gen_ellipse_patch(1.5, 0, 0.05, rng), std::invalid_argument);
}

TEST_CASE("elastic_deform with alpha 0 is the identity") {
  Rng rng(5);
  ShapePatch p = gen_ellipse_patch(1.2, 10, 0.8, rng);
  ShapePatch d = elastic_deform(p, 0.0, 4.0, rng);
  for (size_t i = 0; i < p.size(); ++i) CHECK(d.data[i] == p.data[i]);
}

TEST_CASE("elastic_deform at the default strength keeps the area within 25%") {
  Rng seed_rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(seed_rng.next_u64());
    ShapePatch p = gen_ellipse_patch(1.3, 45, 0.8, rng);
    const int before = foreground_area(p);
    ShapePatch d = elastic_deform(p, 2.0, 4.0, rng);
    const int after = foreground_area(d);
    CHECK(std::abs(after - before) < 0.25 * before);
  }
}

TEST_CASE("elastic_deform is deterministic under a fixed seed") {
  Rng a(7), b(7);
  ShapePatch p = gen_ellipse_patch(1.4, 80, 0.8, a);
  Rng a2(8), b2(8);
  ShapePatch d1 = elastic_deform(p, 2, 4, a2);
  ShapePatch d2 = elastic_deform(p, 2, 4, b2);
  CHECK(d1.data == d2.data);
}

TEST_CASE("elastic_deform validates parameters") {
  Rng rng(9);
  ShapePatch p(kPatchSize, kPatchSize);
  CHECK_THROWS_AS(elastic_deform(p, 2, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(elastic_deform(p, -1, 4, rng), std::invalid_argument);
}

TEST_CASE("augment_rotations produces 360/step patches") {
  Rng rng(10);
  ShapePatch p = gen_ellipse_patch(1.8, 0, 0.8, rng);
  CHECK(augment_rotations(p, 30).size() == 12);
  CHECK(augment_rotations(p, 90).size() == 4);
  CHECK_THROWS_AS(augment_rotations(p, 50), std::invalid_argument);
}

TEST_CASE("rotating a circle changes nothing") {
  Rng rng(11);
  ShapePatch circle = gen_ellipse_patch(1.0, 0, 0.8, rng);
  const auto rots = augment_rotations(circle, 30);
  for (size_t i = 0; i < rots.size(); ++i)
    for (size_t j = i + 1; j < rots.size(); ++j) CHECK(patch_iou(rots[i], rots[j]) >= 0.95);
}

TEST_CASE("two 180-degree rotations restore the patch") {
  Rng rng(12);
  ShapePatch p = gen_ellipse_patch(2.0, 25, 0.8, rng);
  const auto once = augment_rotations(p, 180);
  REQUIRE(once.size() == 2);
  const auto twice = augment_rotations(once[1], 180);
  CHECK(patch_iou(twice[1], p) >= 0.95);
}

TEST_CASE("gen_shape_dataset near-circular when r_max is 1") {
  Rng rng(13);
  const auto patches = gen_shape_dataset(50, 1.0, 2.0, 4.0, rng);
  for (const auto& p : patches) {
    Bounds b = fg_bounds(p);
    const double aspect = static_cast<double>(b.x1 - b.x0 + 1) / (b.y1 - b.y0 + 1);
    CHECK(aspect >= 0.8);
    CHECK(aspect <= 1.25);
  }
}

TEST_CASE("gen_shape_dataset is bit-identical under a fixed seed") {
  Rng a(14), b(14);
  const auto p1 = gen_shape_dataset(20, 1.5, 2, 4, a);
  const auto p2 = gen_shape_dataset(20, 1.5, 2, 4, b);
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].data == p2[i].data);
}

TEST_CASE("gen_shape_dataset rejects n = 0") {
  Rng rng(15);
  CHECK_THROWS_AS(gen_shape_dataset(0, 1.5, 2, 4, rng), std::invalid_argument);
}

TEST_CASE("extract_annotation_patches centers a single square instance") {
  LabelImage labels(64, 64);
  for (int y = 20; y < 36; ++y)
    for (int x = 24; x < 40; ++x) labels.at(y, x) = 1;
  const auto patches = extract_annotation_patches(labels);
  REQUIRE(patches.size() == 1);
  Bounds b = fg_bounds(patches[0]);
  // centered square: symmetric margins, roughly 32/1.2 wide
  CHECK(std::abs((b.x0 + b.x1) - (kPatchSize - 1)) <= 1);
  CHECK(std::abs((b.y0 + b.y1) - (kPatchSize - 1)) <= 1);
  CHECK(b.x1 - b.x0 == doctest::Approx(kPatchSize / 1.2).epsilon(0.15));
}

TEST_CASE("border instances are skipped") {
  LabelImage labels(64, 64);
  // instance 1: touches the top border
  for (int y = 0; y < 10; ++y)
    for (int x = 10; x < 20; ++x) labels.at(y, x) = 1;
  // instances 2 and 3: interior
  for (int y = 20; y < 30; ++y)
    for (int x = 10; x < 20; ++x) labels.at(y, x) = 2;
  for (int y = 40; y < 52; ++y)
    for (int x = 30; x < 44; ++x) labels.at(y, x) = 3;
  CHECK(extract_annotation_patches(labels).size() == 2);
}

TEST_CASE("extracted patch foreground never touches the patch border") {
  LabelImage labels(64, 64);
  for (int y = 20; y < 45; ++y)
    for (int x = 15; x < 40; ++x) labels.at(y, x) = 1;
  const auto patches = extract_annotation_patches(labels);
  REQUIRE(patches.size() == 1);
  const ShapePatch& p = patches[0];
  for (int i = 0; i < kPatchSize; ++i) {
    CHECK(p.at(0, i) <= 0.5f);
    CHECK(p.at(kPatchSize - 1, i) <= 0.5f);
    CHECK(p.at(i, 0) <= 0.5f);
    CHECK(p.at(i, kPatchSize - 1) <= 0.5f);
  }
}

TEST_CASE("extract_annotation_patches rejects empty label maps") {
  CHECK_THROWS_AS(extract_annotation_patches(LabelImage(32, 32)), std::invalid_argument);
}

TEST_CASE("paste-back of extracted patches reproduces instances at IoU >= 0.8") {
  Rng rng(16);
  SceneConfig sc;
  SceneSample scene = gen_toy_scene(6, sc, rng);
  const auto patches = extract_annotation_patches(scene.labels);
  REQUIRE(!patches.empty());

  // extraction returns patches in first-encounter scan order
  std::vector<int> scan_order;
  for (int y = 0; y < scene.labels.height; ++y)
    for (int x = 0; x < scene.labels.width; ++x) {
      const int id = static_cast<int>(scene.labels.at(y, x));
      if (id == 0) continue;
      if (std::find(scan_order.begin(), scan_order.end(), id) == scan_order.end())
        scan_order.push_back(id);
    }
  size_t pi = 0;
  for (int want : scan_order) {
    const auto& m = *std::find_if(scene.meta.begin(), scene.meta.end(),
                                  [&](const InstanceMeta& mm) { return mm.id == want; });
    if (m.x0 == 0 || m.y0 == 0 || m.x1 == scene.labels.width || m.y1 == scene.labels.height)
      continue;
    REQUIRE(pi < patches.size());
    const double cx = (m.x0 + m.x1) / 2.0 - 0.5, cy = (m.y0 + m.y1) / 2.0 - 0.5;
    const double side = std::max(m.x1 - m.x0, m.y1 - m.y0) * 1.2;
    long inter = 0, uni = 0;
    for (int y = 0; y < scene.labels.height; ++y)
      for (int x = 0; x < scene.labels.width; ++x) {
        const bool gt = scene.labels.at(y, x) == static_cast<uint32_t>(m.id);
        // sample the patch at this image position
        const double px = (x - cx) / side * kPatchSize + kPatchSize / 2.0 - 0.5;
        const double py = (y - cy) / side * kPatchSize + kPatchSize / 2.0 - 0.5;
        bool pred = false;
        const int ix = static_cast<int>(std::floor(px)), iy = static_cast<int>(std::floor(py));
        if (ix >= -1 && ix < kPatchSize && iy >= -1 && iy < kPatchSize) {
          auto tapc = [&](int yy, int xx) -> float {
            return (yy >= 0 && yy < kPatchSize && xx >= 0 && xx < kPatchSize)
                       ? patches[pi].at(yy, xx)
                       : 0.f;
          };
          const float fa = static_cast<float>(px - ix), fb = static_cast<float>(py - iy);
          const float v = (1 - fb) * ((1 - fa) * tapc(iy, ix) + fa * tapc(iy, ix + 1)) +
                          fb * ((1 - fa) * tapc(iy + 1, ix) + fa * tapc(iy + 1, ix + 1));
          pred = v > 0.5f;
        }
        inter += gt && pred;
        uni += gt || pred;
      }
    CHECK(static_cast<double>(inter) / static_cast<double>(uni) >= 0.8);
    ++pi;
  }
}

TEST_CASE("gen_toy_scene single instance has its Sobel peak on the boundary") {
  Rng rng(17);
  SceneConfig sc;
  SceneSample scene = gen_toy_scene(1, sc, rng);
  REQUIRE(scene.meta.size() == 1);
  GrayImage g = sobel_gradient_map(scene.image);
  int best_x = 0, best_y = 0;
  float best = -1;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (g.at(y, x) > best) {
        best = g.at(y, x);
        best_y = y;
        best_x = x;
      }
  // the argmax sits within 2 px of a label boundary
  bool near_boundary = false;
  for (int dy = -2; dy <= 2 && !near_boundary; ++dy)
    for (int dx = -2; dx <= 2 && !near_boundary; ++dx) {
      const int y = std::clamp(best_y + dy, 0, g.height - 1);
      const int x = std::clamp(best_x + dx, 0, g.width - 1);
      const uint32_t c = scene.labels.at(y, x);
      const uint32_t r = scene.labels.at(std::clamp(y + 1, 0, g.height - 1), x);
      const uint32_t d = scene.labels.at(y, std::clamp(x + 1, 0, g.width - 1));
      if (c != r || c != d) near_boundary = true;
    }
  CHECK(near_boundary);
}

TEST_CASE("gen_toy_scene is deterministic under a fixed seed") {
  Rng a(18), b(18);
  SceneConfig sc;
  SceneSample s1 = gen_toy_scene(10, sc, a);
  SceneSample s2 = gen_toy_scene(10, sc, b);
  CHECK(s1.image.data == s2.image.data);
  CHECK(s1.labels.data == s2.labels.data);
}

TEST_CASE("instance areas stay within the configured size envelope") {
  Rng rng(19);
  SceneConfig sc;
  SceneSample scene = gen_toy_scene(8, sc, rng);
  const double lo = 3.14159265 / 4 * (sc.s_cell * sc.s_min) * (sc.s_cell * sc.s_min) * 0.75;
  const double hi = 3.14159265 / 4 * (sc.s_cell * sc.s_max * sc.r_max_shape) *
                    (sc.s_cell * sc.s_max * sc.r_max_shape) * 1.25;
  for (const auto& m : scene.meta) {
    CHECK(m.area >= lo);
    CHECK(m.area <= hi);
  }
}

TEST_CASE("labels and rendered intensities are consistent") {
  Rng rng(20);
  SceneConfig sc;
  SceneSample scene = gen_toy_scene(10, sc, rng);
  long fg = 0, bright = 0;
  const float thr = static_cast<float>(sc.background + sc.contrast / 2);
  for (int y = 0; y < scene.labels.height; ++y)
    for (int x = 0; x < scene.labels.width; ++x) {
      if (scene.labels.at(y, x) == 0) continue;
      ++fg;
      bright += scene.image.at(y, x) > thr;
    }
  REQUIRE(fg > 0);
  CHECK(static_cast<double>(bright) / static_cast<double>(fg) >= 0.95);
}

TEST_CASE("scene save/load round trip") {
  Rng rng(21);
  SceneConfig sc;
  SceneSample scene = gen_toy_scene(5, sc, rng);
  save_scene("/tmp/shapeseg_scene_test", scene);
  SceneSample loaded = load_scene("/tmp/shapeseg_scene_test");
  CHECK(loaded.labels.data == scene.labels.data);
  CHECK(loaded.meta.size() == scene.meta.size());
  // image rounds through 8-bit quantization
  for (size_t i = 0; i < scene.image.size(); ++i)
    CHECK(std::abs(loaded.image.data[i] - scene.image.data[i]) <= 1.0f / 255 + 1e-4f);
}

TEST_SUITE_END();
