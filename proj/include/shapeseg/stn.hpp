#pragma once

#include "ndgrad/ops.hpp"
#include "shapeseg/image.hpp"

namespace shapeseg {
NDGRAD_NS_BEGIN

namespace stn {

// Axis-aligned affine map from normalized output coordinates to normalized
// source coordinates; both frames are [-1,1]^2, x rightward, y downward,
// origin at the image center.
struct AffineTransform {
  ndgrad::real sx = 1, sy = 1, tx = 0, ty = 0;

  AffineTransform inverse() const { return {1 / sx, 1 / sy, -tx / sx, -ty / sy}; }
  AffineTransform compose(const AffineTransform& inner) const {
    // this applied after inner: out -> inner -> src
    return {sx * inner.sx, sy * inner.sy, sx * inner.tx + tx, sy * inner.ty + ty};
  }
  ndgrad::Tensor as_tensor() const {
    return ndgrad::Tensor::from_data({4}, {sx, sy, tx, ty});
  }
};

// One decoded object hypothesis anchored at a cell center. Pixel coordinates
// follow the sampling convention with centers at (i + 0.5).
struct BoxParams {
  int cell_row = 0, cell_col = 0;
  ndgrad::real x_cell = 0, y_cell = 0;  // cell center, pixels
  ndgrad::real o_x = 0, o_y = 0;        // offsets, pixels
  ndgrad::real h_obj = 0, w_obj = 0;    // box size, pixels
  ndgrad::real presence = 0;

  ndgrad::real center_x() const { return x_cell + o_x; }
  ndgrad::real center_y() const { return y_cell + o_y; }
};

// Patch grid -> box region of the image. Sampling the image through the
// returned transform extracts the box content.
AffineTransform crop_transform(const BoxParams& box, int img_h, int img_w);

// Exact inverse: patch frame -> canvas placement.
AffineTransform stitch_transform(const BoxParams& box, int img_h, int img_w);

// Non-differentiable bilinear warp of a float raster (out-of-bounds reads 0);
// used by post-processing and tests.
GrayImage warp_image(const GrayImage& src, const AffineTransform& t, int out_h, int out_w);

}  // namespace stn

NDGRAD_NS_END
}  // namespace shapeseg
