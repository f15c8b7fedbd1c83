#include "shapeseg/stn.hpp"

#include <cmath>
#include <stdexcept>

namespace shapeseg {
NDGRAD_NS_BEGIN

namespace stn {

using ndgrad::real;

AffineTransform crop_transform(const BoxParams& box, int img_h, int img_w) {
  if (!(box.w_obj > 0) || !(box.h_obj > 0))
    throw std::invalid_argument("crop_transform: box has non-positive size");
  AffineTransform t;
  t.sx = box.w_obj / static_cast<real>(img_w);
  t.sy = box.h_obj / static_cast<real>(img_h);
  t.tx = box.center_x() * 2 / static_cast<real>(img_w) - 1;
  t.ty = box.center_y() * 2 / static_cast<real>(img_h) - 1;
  return t;
}

AffineTransform stitch_transform(const BoxParams& box, int img_h, int img_w) {
  return crop_transform(box, img_h, img_w).inverse();
}

GrayImage warp_image(const GrayImage& src, const AffineTransform& t, int out_h, int out_w) {
  GrayImage out(out_h, out_w);
  const int sh = src.height, sw = src.width;
  auto tap = [&](int y, int x) -> float {
    return (y >= 0 && y < sh && x >= 0 && x < sw) ? src.at(y, x) : 0.f;
  };
  for (int oy = 0; oy < out_h; ++oy) {
    const double yo = 2.0 * (oy + 0.5) / out_h - 1.0;
    const double v = (static_cast<double>(t.sy) * yo + t.ty + 1.0) * sh / 2.0 - 0.5;
    const int v0 = static_cast<int>(std::floor(v));
    const float fb = static_cast<float>(v - v0);
    if (v <= -2.0 || v >= sh + 1.0) continue;
    for (int ox = 0; ox < out_w; ++ox) {
      const double xo = 2.0 * (ox + 0.5) / out_w - 1.0;
      const double u = (static_cast<double>(t.sx) * xo + t.tx + 1.0) * sw / 2.0 - 0.5;
      if (u <= -2.0 || u >= sw + 1.0) continue;
      const int u0 = static_cast<int>(std::floor(u));
      const float fa = static_cast<float>(u - u0);
      out.at(oy, ox) = (1.f - fb) * ((1.f - fa) * tap(v0, u0) + fa * tap(v0, u0 + 1)) +
                       fb * ((1.f - fa) * tap(v0 + 1, u0) + fa * tap(v0 + 1, u0 + 1));
    }
  }
  return out;
}

}  // namespace stn

NDGRAD_NS_END
}  // namespace shapeseg
