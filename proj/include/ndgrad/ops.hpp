#pragma once

#include "ndgrad/tensor.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

// ---- convolution / pooling / linear ----------------------------------------

// x: [N,C,H,W], k: [F,C,kh,kw], optional bias [F]. Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int padding);
inline Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
  return conv2d(x, k, nullptr, stride, padding);
}
// conv2d with a fused relu epilogue; one node instead of two full tensors.
Tensor conv2d_relu(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int padding);

// Non-overlapping max pooling; H and W must be divisible by `size`. Backward
// routes the gradient to the argmax position (first occurrence on ties).
Tensor maxpool2d(const Tensor& x, int size = 2);

// Nearest-neighbor 2x upsampling; backward sums each 2x2 block.
Tensor upsample2x(const Tensor& x);

// x: [N,D], w: [D,E], b: [E].
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- elementwise ------------------------------------------------------------

enum class Act { kSigmoid, kTanh, kExp, kRelu, kLog };

Tensor activation(const Tensor& x, Act kind);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Act::kSigmoid); }
inline Tensor tanh_act(const Tensor& x) { return activation(x, Act::kTanh); }
inline Tensor exp_act(const Tensor& x) { return activation(x, Act::kExp); }
inline Tensor relu(const Tensor& x) { return activation(x, Act::kRelu); }
inline Tensor log_act(const Tensor& x) { return activation(x, Act::kLog); }

Tensor sqrt_act(const Tensor& x);  // requires x > 0
Tensor square(const Tensor& x);
Tensor clamp(const Tensor& x, real lo, real hi);

// scale * x + shift
Tensor affine_scalar(const Tensor& x, real scale, real shift);
inline Tensor add_scalar(const Tensor& x, real c) { return affine_scalar(x, real(1), c); }
inline Tensor mul_scalar(const Tensor& x, real c) { return affine_scalar(x, c, real(0)); }
inline Tensor neg(const Tensor& x) { return affine_scalar(x, real(-1), real(0)); }

// Equal-shape binary ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Pixelwise minimum; the subgradient routes to the smaller argument, to the
// first argument on ties.
Tensor min_pairwise(const Tensor& a, const Tensor& b);

// ---- reductions / shape -----------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [N,D] -> [N], summing rows.
Tensor sum_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape s);
// [N,C,H,W] -> [N,1,H,W], selecting channel c.
Tensor slice_channel(const Tensor& x, int c);

// ---- differentiable sampling ------------------------------------------------

// Axis-aligned affine sample. `params` is a 4-tensor (sx, sy, tx, ty) mapping
// normalized output coordinates to normalized source coordinates:
//   xs = sx * xo + tx,  ys = sy * yo + ty
// with both frames in [-1,1]^2, pixel centers at (i + 0.5) / extent.
// Out-of-bounds reads are zero. Gradients flow to the source and the params.
Tensor bilinear_sample(const Tensor& src, const Tensor& params, int out_h, int out_w);

// Batched crop: one source image [1,1,H,W], per-cell params [N] each,
// output [N,1,s,s].
Tensor crop_batch(const Tensor& img, const Tensor& sx, const Tensor& sy, const Tensor& tx,
                  const Tensor& ty, int patch);

// Additive stitch: canvas = sum_i presence[i] * warp(patch[i], params_i).
// Patches [N,1,s,s] are accumulated in index order onto a [1,1,H,W] canvas.
Tensor stitch_add(const Tensor& patches, const Tensor& sx, const Tensor& sy, const Tensor& tx,
                  const Tensor& ty, const Tensor& presence, int out_h, int out_w);

NDGRAD_NS_END
}  // namespace ndgrad
