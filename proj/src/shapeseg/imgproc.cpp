#include "shapeseg/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace shapeseg {
NDGRAD_NS_BEGIN

GrayImage sobel_gradient_map(const GrayImage& img) {
  const int h = img.height, w = img.width;
  if (h < 3 || w < 3)
    throw std::invalid_argument("sobel_gradient_map: image must be at least 3x3");

  auto clampec = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return img.at(y, x);
  };

  GrayImage out(h, w);
  float mx = 0.f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float p00 = clampec(y - 1, x - 1), p01 = clampec(y - 1, x), p02 = clampec(y - 1, x + 1);
      const float p10 = clampec(y, x - 1), p12 = clampec(y, x + 1);
      const float p20 = clampec(y + 1, x - 1), p21 = clampec(y + 1, x), p22 = clampec(y + 1, x + 1);
      const float gx = (p02 + 2.f * p12 + p22) - (p00 + 2.f * p10 + p20);
      const float gy = (p20 + 2.f * p21 + p22) - (p00 + 2.f * p01 + p02);
      const float m = std::sqrt(gx * gx + gy * gy);
      out.at(y, x) = m;
      mx = std::max(mx, m);
    }
  }
  if (mx > 0.f) {
    const float inv = 1.f / mx;
    for (auto& v : out.data) v *= inv;
  }
  return out;
}

GrayImage equalize_clip(const GrayImage& img, float factor) {
  if (!(factor > 0.f)) throw std::invalid_argument("equalize_clip: factor must be > 0");
  double mean = 0.0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(img.size());

  const float clip_value = factor * static_cast<float>(mean);
  GrayImage out = img;
  float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
  for (auto& v : out.data) {
    v = std::min(v, clip_value);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) return img;  // constant (incl. all-zero) input
  const float inv = 1.f / (hi - lo);
  for (auto& v : out.data) v = (v - lo) * inv;
  return out;
}

GrayImage truncate_normalize(const GrayImage& g, float fraction) {
  if (!(fraction > 0.f) || fraction > 1.f)
    throw std::invalid_argument("truncate_normalize: fraction must be in (0,1]");
  float mx = 0.f;
  for (float v : g.data) mx = std::max(mx, v);
  if (mx <= 0.f) return g;
  const float clip_value = fraction * mx;
  GrayImage out = g;
  const float inv = 1.f / clip_value;
  for (auto& v : out.data) v = std::min(v, clip_value) * inv;
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w) {
  GrayImage out(out_h, out_w);
  const float sy = static_cast<float>(img.height) / out_h;
  const float sx = static_cast<float>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const float v = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    const int v0 = static_cast<int>(std::floor(v));
    const float fb = v - static_cast<float>(v0);
    for (int x = 0; x < out_w; ++x) {
      const float u = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      const int u0 = static_cast<int>(std::floor(u));
      const float fa = u - static_cast<float>(u0);
      auto tapc = [&](int yy, int xx) {
        yy = std::clamp(yy, 0, img.height - 1);
        xx = std::clamp(xx, 0, img.width - 1);
        return img.at(yy, xx);
      };
      out.at(y, x) = (1.f - fb) * ((1.f - fa) * tapc(v0, u0) + fa * tapc(v0, u0 + 1)) +
                     fb * ((1.f - fa) * tapc(v0 + 1, u0) + fa * tapc(v0 + 1, u0 + 1));
    }
  }
  return out;
}

LabelImage resize_nearest(const LabelImage& labels, int out_h, int out_w) {
  LabelImage out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(labels.height - 1,
                            static_cast<int>((static_cast<float>(y) + 0.5f) * labels.height / out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(labels.width - 1,
                              static_cast<int>((static_cast<float>(x) + 0.5f) * labels.width / out_w));
      out.at(y, x) = labels.at(sy, sx);
    }
  }
  return out;
}

NDGRAD_NS_END
}  // namespace shapeseg
