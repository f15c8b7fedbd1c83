#pragma once

#include <cmath>
#include <vector>

#include "ndgrad/rng.hpp"
#include "ndgrad/tensor.hpp"
#include "shapeseg/image.hpp"

namespace testutil {

using ndgrad::real;
using ndgrad::Rng;
using ndgrad::Tensor;

inline Tensor rand_tensor(ndgrad::Shape s, Rng& rng, double lo = 0.05, double hi = 0.95) {
  Tensor t = Tensor::zeros(std::move(s));
  for (auto& v : t.values()) v = static_cast<real>(rng.uniform(lo, hi));
  return t;
}

// Smooth test image: sum of a few Gaussian bumps, values in (0,1).
inline shapeseg::GrayImage smooth_image(int h, int w, Rng& rng, int bumps = 4) {
  shapeseg::GrayImage img(h, w, 0.1f);
  for (int b = 0; b < bumps; ++b) {
    const double cx = rng.uniform(0.2, 0.8) * w;
    const double cy = rng.uniform(0.2, 0.8) * h;
    const double s = rng.uniform(0.08, 0.25) * std::min(h, w);
    const double a = rng.uniform(0.2, 0.7);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img.at(y, x) += static_cast<float>(a * std::exp(-d2 / (2 * s * s)));
      }
  }
  for (auto& v : img.data) v = std::min(v, 1.f);
  return img;
}

inline double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni ? static_cast<double>(inter) / uni : 1.0;
}

inline double patch_iou(const shapeseg::GrayImage& a, const shapeseg::GrayImage& b,
                        float thr = 0.5f) {
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const bool fa = a.data[i] > thr, fb = b.data[i] > thr;
    inter += fa && fb;
    uni += fa || fb;
  }
  return uni ? static_cast<double>(inter) / uni : 1.0;
}

inline int foreground_area(const shapeseg::GrayImage& p, float thr = 0.5f) {
  int n = 0;
  for (float v : p.data) n += v > thr;
  return n;
}

// Finite differences of bilinear sampling break down when a sample
// coordinate sits on a source grid line (the interpolation derivative is
// discontinuous there). Draws affine params whose entire sampling grid keeps
// a safe margin from grid lines, so central differences see a smooth
// function.
inline Tensor kink_safe_affine_params(int src_h, int src_w, int out_h, int out_w, Rng& rng,
                                      double lo_scale = 0.35, double hi_scale = 0.85) {
  auto frac_ok = [](double coord) {
    const double f = coord - std::floor(coord);
    return f > 0.10 && f < 0.90;
  };
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double sx = rng.uniform(lo_scale, hi_scale), sy = rng.uniform(lo_scale, hi_scale);
    const double tx = rng.uniform(-0.2, 0.2), ty = rng.uniform(-0.2, 0.2);
    bool ok = true;
    for (int ox = 0; ox < out_w && ok; ++ox) {
      const double xo = 2.0 * (ox + 0.5) / out_w - 1.0;
      ok = frac_ok((sx * xo + tx + 1.0) * src_w / 2.0 - 0.5);
    }
    for (int oy = 0; oy < out_h && ok; ++oy) {
      const double yo = 2.0 * (oy + 0.5) / out_h - 1.0;
      ok = frac_ok((sy * yo + ty + 1.0) * src_h / 2.0 - 0.5);
    }
    if (ok)
      return Tensor::from_data({4}, {static_cast<real>(sx), static_cast<real>(sy),
                                     static_cast<real>(tx), static_cast<real>(ty)});
  }
  throw std::runtime_error("kink_safe_affine_params: no safe draw found");
}

// Moves reconstruction values away from the two spots where edge-loss
// finite differences degenerate: min() ties with the image map, and the
// cancellation point rec ~ num/(2*den) where the true gradient vanishes.
inline void separate_edge_loss_branches(const Tensor& g_img, Tensor& g_rec, double alpha = 0.01) {
  double num = 0, den = 0;
  const size_t n = g_rec.size();
  for (size_t i = 0; i < n; ++i) {
    const double m = std::min<double>(g_img.at(i), g_rec.at(i));
    num += m * m;
    den += g_rec.at(i);
  }
  num /= static_cast<double>(n);
  den = den / static_cast<double>(n) + alpha;
  const double cancel = num / (2.0 * den);
  for (size_t i = 0; i < n; ++i) {
    if (std::abs(static_cast<double>(g_rec.at(i)) - g_img.at(i)) < 6e-3)
      g_rec.data()[i] += real(0.02);
    if (std::abs(static_cast<double>(g_rec.at(i)) - cancel) < 0.05)
      g_rec.data()[i] += real(0.1);
  }
}

}  // namespace testutil
