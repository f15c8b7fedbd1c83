#include "shapeseg/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "shapeseg/png_io.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

namespace {

constexpr double kPi = 3.14159265358979323846;

// Coverage rasterization of a rotated ellipse, 4x4 subsamples per pixel.
void rasterize_ellipse(GrayImage& img, double cx, double cy, double semi_a, double semi_b,
                       double angle_deg, bool accumulate_max = false) {
  const double theta = angle_deg * kPi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double inv_a2 = 1.0 / (semi_a * semi_a), inv_b2 = 1.0 / (semi_b * semi_b);
  const double reach = std::max(semi_a, semi_b) + 1.5;
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + reach)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      int inside = 0;
      for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
          // pixel x spans [x-0.5, x+0.5): centers match the bilinear sampler
          const double px = x - 0.5 + (sx + 0.5) / 4.0 - cx;
          const double py = y - 0.5 + (sy + 0.5) / 4.0 - cy;
          const double xr = px * c + py * s;
          const double yr = -px * s + py * c;
          if (xr * xr * inv_a2 + yr * yr * inv_b2 <= 1.0) ++inside;
        }
      }
      const float cov = static_cast<float>(inside) / 16.f;
      if (accumulate_max)
        img.at(y, x) = std::max(img.at(y, x), cov);
      else
        img.at(y, x) = cov;
    }
  }
}

// Separable Gaussian smoothing with replicate borders.
void gaussian_smooth(std::vector<float>& f, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = static_cast<float>(v);
    norm += v;
  }
  for (auto& v : kernel) v = static_cast<float>(v / norm);

  std::vector<float> tmp(f.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               f[static_cast<size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      float acc = 0.f;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               tmp[static_cast<size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      f[static_cast<size_t>(y) * w + x] = acc;
    }
  }
}

float sample_zero_outside(const GrayImage& img, double u, double v) {
  const int u0 = static_cast<int>(std::floor(u));
  const int v0 = static_cast<int>(std::floor(v));
  const float fa = static_cast<float>(u - u0);
  const float fb = static_cast<float>(v - v0);
  auto tap = [&](int y, int x) -> float {
    return (y >= 0 && y < img.height && x >= 0 && x < img.width) ? img.at(y, x) : 0.f;
  };
  return (1.f - fb) * ((1.f - fa) * tap(v0, u0) + fa * tap(v0, u0 + 1)) +
         fb * ((1.f - fa) * tap(v0 + 1, u0) + fa * tap(v0 + 1, u0 + 1));
}

struct InstanceBox {
  int x0, y0, x1, y1;  // [x0,x1) x [y0,y1)
  int area = 0;
};

std::vector<std::pair<uint32_t, InstanceBox>> instance_boxes(const LabelImage& labels) {
  std::vector<std::pair<uint32_t, InstanceBox>> out;
  auto find = [&](uint32_t id) -> InstanceBox* {
    for (auto& [k, v] : out)
      if (k == id) return &v;
    return nullptr;
  };
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const uint32_t id = labels.at(y, x);
      if (id == 0) continue;
      InstanceBox* b = find(id);
      if (!b) {
        out.push_back({id, {x, y, x + 1, y + 1, 1}});
      } else {
        b->x0 = std::min(b->x0, x);
        b->y0 = std::min(b->y0, y);
        b->x1 = std::max(b->x1, x + 1);
        b->y1 = std::max(b->y1, y + 1);
        b->area += 1;
      }
    }
  }
  return out;
}

}  // namespace

ShapePatch gen_ellipse_patch(double a_over_b, double angle_deg, double fill_fraction,
                             ndgrad::Rng& rng) {
  if (a_over_b < 1.0 || a_over_b > 8.0)
    throw std::invalid_argument("gen_ellipse_patch: axis ratio out of range [1, 8]");
  if (fill_fraction < 0.2 || fill_fraction > 0.9)
    throw std::invalid_argument("gen_ellipse_patch: fill_fraction out of range [0.2, 0.9]");
  (void)rng;
  ShapePatch patch(kPatchSize, kPatchSize);
  const double a = fill_fraction * kPatchSize / 2.0;
  const double b = a / a_over_b;
  const double c = kPatchSize / 2.0 - 0.5;
  rasterize_ellipse(patch, c, c, a, b, angle_deg);
  return patch;
}

GrayImage elastic_deform_image(const GrayImage& img, double alpha, double sigma, ndgrad::Rng& rng) {
  if (sigma < 1.0) throw std::invalid_argument("elastic_deform: sigma must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("elastic_deform: alpha must be >= 0");
  if (alpha == 0.0) return img;

  const int h = img.height, w = img.width;
  const size_t n = img.size();
  std::vector<float> dx(n), dy(n);
  for (auto& v : dx) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : dy) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  gaussian_smooth(dx, h, w, sigma);
  gaussian_smooth(dy, h, w, sigma);

  // alpha is the peak displacement in pixels
  for (std::vector<float>* f : {&dx, &dy}) {
    float peak = 0.f;
    for (float v : *f) peak = std::max(peak, std::abs(v));
    const float scale = peak > 0 ? static_cast<float>(alpha) / peak : 0.f;
    for (auto& v : *f) v *= scale;
  }

  GrayImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(y, x) = sample_zero_outside(img, x + dx[static_cast<size_t>(y) * w + x],
                                         y + dy[static_cast<size_t>(y) * w + x]);
  return out;
}

ShapePatch elastic_deform(const ShapePatch& patch, double alpha, double sigma, ndgrad::Rng& rng) {
  return elastic_deform_image(patch, alpha, sigma, rng);
}

std::vector<ShapePatch> augment_rotations(const ShapePatch& patch, int step_deg) {
  if (step_deg <= 0 || 360 % step_deg != 0)
    throw std::invalid_argument("augment_rotations: step must divide 360");
  const int h = patch.height, w = patch.width;
  const double cx = w / 2.0 - 0.5, cy = h / 2.0 - 0.5;
  std::vector<ShapePatch> out;
  out.reserve(static_cast<size_t>(360 / step_deg));
  for (int deg = 0; deg < 360; deg += step_deg) {
    const double theta = deg * kPi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    ShapePatch rot(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double px = x - cx, py = y - cy;
        const double u = px * c + py * s + cx;
        const double v = -px * s + py * c + cy;
        rot.at(y, x) = sample_zero_outside(patch, u, v);
      }
    }
    out.push_back(std::move(rot));
  }
  return out;
}

std::vector<ShapePatch> gen_shape_dataset(int n, double r_max_shape, double alpha, double sigma,
                                          ndgrad::Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_shape_dataset: n must be >= 1");
  std::vector<ShapePatch> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double ratio = rng.uniform(1.0, r_max_shape);
    const double angle = rng.uniform(0.0, 360.0);
    ShapePatch p = gen_ellipse_patch(ratio, angle, 0.8, rng);
    out.push_back(elastic_deform(p, alpha, sigma, rng));
  }
  return out;
}

std::vector<ShapePatch> extract_annotation_patches(const LabelImage& labels) {
  const auto boxes = instance_boxes(labels);
  if (boxes.empty())
    throw std::invalid_argument("extract_annotation_patches: label map has no instances");

  std::vector<ShapePatch> out;
  for (const auto& [id, b] : boxes) {
    if (b.x0 == 0 || b.y0 == 0 || b.x1 == labels.width || b.y1 == labels.height) continue;
    if (b.area < 4) continue;
    const double cx = (b.x0 + b.x1) / 2.0 - 0.5;
    const double cy = (b.y0 + b.y1) / 2.0 - 0.5;
    // square side with a 10% margin on each side
    const double side = std::max(b.x1 - b.x0, b.y1 - b.y0) * 1.2;
    ShapePatch patch(kPatchSize, kPatchSize);
    for (int y = 0; y < kPatchSize; ++y) {
      for (int x = 0; x < kPatchSize; ++x) {
        const double u = cx + ((x + 0.5) / kPatchSize - 0.5) * side;
        const double v = cy + ((y + 0.5) / kPatchSize - 0.5) * side;
        // bilinear on the 0/1 indicator of this instance
        const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
        const float fa = static_cast<float>(u - u0), fb = static_cast<float>(v - v0);
        auto tap = [&](int yy, int xx) -> float {
          return (yy >= 0 && yy < labels.height && xx >= 0 && xx < labels.width &&
                  labels.at(yy, xx) == id)
                     ? 1.f
                     : 0.f;
        };
        patch.at(y, x) = (1.f - fb) * ((1.f - fa) * tap(v0, u0) + fa * tap(v0, u0 + 1)) +
                         fb * ((1.f - fa) * tap(v0 + 1, u0) + fa * tap(v0 + 1, u0 + 1));
      }
    }
    int fg = 0;
    for (float v : patch.data) fg += v > 0.5f;
    if (fg < 4) continue;
    out.push_back(std::move(patch));
  }
  return out;
}

SceneSample gen_toy_scene(int k, const SceneConfig& cfg, ndgrad::Rng& rng) {
  if (k < 1) throw std::invalid_argument("gen_toy_scene: k must be >= 1");
  const int sz = cfg.size;
  SceneSample scene;
  scene.seed = rng.seed();
  scene.image = GrayImage(sz, sz, static_cast<float>(cfg.background));
  scene.labels = LabelImage(sz, sz);

  const double mean_diam = cfg.s_cell * (cfg.s_min + cfg.s_max) / 2.0;
  const double min_dist = 0.7 * mean_diam;

  std::vector<std::pair<double, double>> centers;
  uint32_t next_id = 1;
  for (int i = 0; i < k; ++i) {
    const double diam = cfg.s_cell * rng.uniform(cfg.s_min, cfg.s_max);
    const double ratio = rng.uniform(1.0, cfg.r_max_shape);
    const double angle = rng.uniform(0.0, 360.0);
    const double semi_a = diam * std::sqrt(ratio) / 2.0;
    const double semi_b = diam / (2.0 * std::sqrt(ratio));
    const double margin = semi_a * 1.2 + 4.0;

    bool placed = false;
    double cx = 0, cy = 0;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      cx = rng.uniform(margin, sz - margin);
      cy = rng.uniform(margin, sz - margin);
      bool ok = true;
      for (const auto& [px, py] : centers) {
        const double d2 = (cx - px) * (cx - px) + (cy - py) * (cy - py);
        if (d2 < min_dist * min_dist) {
          ok = false;
          break;
        }
      }
      if (ok) {
        placed = true;
        break;
      }
    }
    if (!placed) continue;
    centers.emplace_back(cx, cy);

    // render into a local window, deform, paste (later id wins)
    const int half = static_cast<int>(std::ceil(semi_a * 1.3)) + 6;
    const int win = 2 * half + 1;
    GrayImage shape(win, win);
    rasterize_ellipse(shape, half, half, semi_a, semi_b, angle);
    const double win_scale = static_cast<double>(win) / kPatchSize;
    shape = elastic_deform_image(shape, cfg.elastic_alpha * win_scale,
                                 std::max(1.0, cfg.elastic_sigma * win_scale), rng);

    const uint32_t id = next_id++;
    const int bx = static_cast<int>(std::lround(cx)) - half;
    const int by = static_cast<int>(std::lround(cy)) - half;
    std::vector<bool> occluded_prev;
    for (int y = 0; y < win; ++y) {
      const int iy = by + y;
      if (iy < 0 || iy >= sz) continue;
      for (int x = 0; x < win; ++x) {
        const int ix = bx + x;
        if (ix < 0 || ix >= sz) continue;
        const float cov = shape.at(y, x);
        if (cov <= 0.f) continue;
        float& px = scene.image.at(iy, ix);
        px = px * (1.f - cov) + static_cast<float>(cfg.background + cfg.contrast) * cov;
        if (cov > 0.5f) {
          const uint32_t prev = scene.labels.at(iy, ix);
          if (prev != 0 && prev != id) {
            for (auto& m : scene.meta)
              if (static_cast<uint32_t>(m.id) == prev) m.occluded = true;
          }
          scene.labels.at(iy, ix) = id;
        }
      }
    }
    scene.meta.push_back({static_cast<int>(id), 0, 0, 0, 0, 0, false});
  }

  // noise over the full canvas
  for (auto& v : scene.image.data)
    v = std::clamp(v + static_cast<float>(rng.normal() * cfg.noise_sigma), 0.f, 1.f);

  // drop tiny / fully occluded instances, make ids contiguous, refresh meta
  const auto boxes = instance_boxes(scene.labels);
  std::vector<uint32_t> remap(next_id, 0);
  std::vector<InstanceMeta> meta;
  uint32_t out_id = 0;
  for (uint32_t id = 1; id < next_id; ++id) {
    const InstanceBox* b = nullptr;
    for (const auto& [bid, box] : boxes)
      if (bid == id) b = &box;
    if (!b || b->area < 9) continue;
    remap[id] = ++out_id;
    bool was_occluded = false;
    for (const auto& m : scene.meta)
      if (static_cast<uint32_t>(m.id) == id) was_occluded = m.occluded;
    meta.push_back({static_cast<int>(out_id), b->x0, b->y0, b->x1, b->y1, b->area, was_occluded});
  }
  for (auto& v : scene.labels.data) v = remap[v];
  scene.meta = std::move(meta);
  return scene;
}

void save_scene(const std::string& stem, const SceneSample& scene) {
  write_gray_png(stem + "_img.png", scene.image);
  write_label_png(stem + "_labels.png", scene.labels);
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["instances"] = nlohmann::json::array();
  for (const auto& m : scene.meta)
    j["instances"].push_back({{"id", m.id},
                              {"box", {m.x0, m.y0, m.x1, m.y1}},
                              {"area", m.area},
                              {"occluded", m.occluded}});
  std::ofstream out(stem + ".json");
  if (!out) throw std::runtime_error("save_scene: cannot write " + stem + ".json");
  out << j.dump(2) << '\n';
}

SceneSample load_scene(const std::string& stem) {
  SceneSample scene;
  scene.image = read_gray_png(stem + "_img.png");
  scene.labels = read_label_png(stem + "_labels.png");
  std::ifstream in(stem + ".json");
  if (in) {
    nlohmann::json j = nlohmann::json::parse(in);
    scene.seed = j.value("seed", 0ull);
    for (const auto& e : j.value("instances", nlohmann::json::array())) {
      InstanceMeta m;
      m.id = e.value("id", 0);
      const auto& b = e.at("box");
      m.x0 = b[0];
      m.y0 = b[1];
      m.x1 = b[2];
      m.y1 = b[3];
      m.area = e.value("area", 0);
      m.occluded = e.value("occluded", false);
      scene.meta.push_back(m);
    }
  }
  return scene;
}

NDGRAD_NS_END
}  // namespace shapeseg
