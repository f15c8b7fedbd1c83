#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ndgrad/ops.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

namespace {

// Axis-aligned affine sampling grid. Normalized frames are [-1,1]^2 with
// pixel centers at (i+0.5)/extent; source pixel coordinate for output pixel
// ox is u = ax*ox + bx (and v likewise for rows).
struct SampleGrid {
  real ax, bx, ay, by;
  int src_h, src_w, out_h, out_w;
  real du_dsx, dv_dsy;  // per-pixel factors added separately
  real half_w, half_h;

  SampleGrid(real sx, real sy, real tx, real ty, int sh, int sw, int oh, int ow)
      : src_h(sh), src_w(sw), out_h(oh), out_w(ow) {
    half_w = real(0.5) * static_cast<real>(sw);
    half_h = real(0.5) * static_cast<real>(sh);
    ax = sx * static_cast<real>(sw) / static_cast<real>(ow);
    bx = ax * real(0.5) - sx * half_w + (tx + real(1)) * half_w - real(0.5);
    ay = sy * static_cast<real>(sh) / static_cast<real>(oh);
    by = ay * real(0.5) - sy * half_h + (ty + real(1)) * half_h - real(0.5);
    du_dsx = 0;  // unused marker; derivative computed per pixel
    dv_dsy = 0;
  }

  real u_of(int ox) const { return ax * static_cast<real>(ox) + bx; }
  real v_of(int oy) const { return ay * static_cast<real>(oy) + by; }
  // normalized output coordinate, needed for d/dscale
  real xo_of(int ox) const {
    return real(2) * (static_cast<real>(ox) + real(0.5)) / static_cast<real>(out_w) - real(1);
  }
  real yo_of(int oy) const {
    return real(2) * (static_cast<real>(oy) + real(0.5)) / static_cast<real>(out_h) - real(1);
  }

  // Output-index interval whose source coordinate lies in [-2, extent+1];
  // outside it both the value and all gradients are identically zero.
  static void active_range(real a, real b, real extent, int n, int* lo, int* hi) {
    *lo = 0;
    *hi = n;
    const real lo_c = real(-2), hi_c = extent + real(1);
    if (a > real(0)) {
      *lo = std::max(0, static_cast<int>(std::ceil((lo_c - b) / a)));
      *hi = std::min(n, static_cast<int>(std::floor((hi_c - b) / a)) + 1);
    } else if (a < real(0)) {
      *lo = std::max(0, static_cast<int>(std::ceil((hi_c - b) / a)));
      *hi = std::min(n, static_cast<int>(std::floor((lo_c - b) / a)) + 1);
    } else if (b < lo_c || b > hi_c) {
      *hi = 0;
    }
    if (*hi < *lo) *hi = *lo;
  }

  void x_range(int* lo, int* hi) const { active_range(ax, bx, static_cast<real>(src_w), out_w, lo, hi); }
  void y_range(int* lo, int* hi) const { active_range(ay, by, static_cast<real>(src_h), out_h, lo, hi); }
};

inline real tap(const real* src, int h, int w, int y, int x) {
  return (y >= 0 && y < h && x >= 0 && x < w) ? src[static_cast<size_t>(y) * w + x] : real(0);
}

// dst[oy*ow+ox] (+)= scale * sample(src). When `accumulate` the result is
// added, otherwise assigned.
void sample_forward(const real* src, const SampleGrid& g, real scale, bool accumulate, real* dst) {
  int xlo, xhi, ylo, yhi;
  g.x_range(&xlo, &xhi);
  g.y_range(&ylo, &yhi);
  for (int oy = ylo; oy < yhi; ++oy) {
    const real v = g.v_of(oy);
    const int v0 = static_cast<int>(std::floor(v));
    const real fb = v - static_cast<real>(v0);
    real* row = dst + static_cast<size_t>(oy) * g.out_w;
    for (int ox = xlo; ox < xhi; ++ox) {
      const real u = g.u_of(ox);
      const int u0 = static_cast<int>(std::floor(u));
      const real fa = u - static_cast<real>(u0);
      const real p00 = tap(src, g.src_h, g.src_w, v0, u0);
      const real p01 = tap(src, g.src_h, g.src_w, v0, u0 + 1);
      const real p10 = tap(src, g.src_h, g.src_w, v0 + 1, u0);
      const real p11 = tap(src, g.src_h, g.src_w, v0 + 1, u0 + 1);
      const real val = (real(1) - fb) * ((real(1) - fa) * p00 + fa * p01) +
                       fb * ((real(1) - fa) * p10 + fa * p11);
      if (accumulate)
        row[ox] += scale * val;
      else
        row[ox] = scale * val;
    }
  }
}

struct SampleGrads {
  real* d_src = nullptr;  // may be null
  real d_sx = 0, d_sy = 0, d_tx = 0, d_ty = 0;
  real d_scale = 0;  // d loss / d scale (sum of g * val)
};

// Backward of sample_forward: g_out is the upstream gradient of the dst
// region this sample wrote to (same layout).
void sample_backward(const real* src, const SampleGrid& g, real scale, const real* g_out,
                     SampleGrads* acc) {
  int xlo, xhi, ylo, yhi;
  g.x_range(&xlo, &xhi);
  g.y_range(&ylo, &yhi);
  for (int oy = ylo; oy < yhi; ++oy) {
    const real v = g.v_of(oy);
    const int v0 = static_cast<int>(std::floor(v));
    const real fb = v - static_cast<real>(v0);
    const real yo = g.yo_of(oy);
    const real* grow = g_out + static_cast<size_t>(oy) * g.out_w;
    for (int ox = xlo; ox < xhi; ++ox) {
      const real go = grow[ox];
      if (go == real(0)) continue;
      const real u = g.u_of(ox);
      const int u0 = static_cast<int>(std::floor(u));
      const real fa = u - static_cast<real>(u0);
      const real p00 = tap(src, g.src_h, g.src_w, v0, u0);
      const real p01 = tap(src, g.src_h, g.src_w, v0, u0 + 1);
      const real p10 = tap(src, g.src_h, g.src_w, v0 + 1, u0);
      const real p11 = tap(src, g.src_h, g.src_w, v0 + 1, u0 + 1);
      const real val = (real(1) - fb) * ((real(1) - fa) * p00 + fa * p01) +
                       fb * ((real(1) - fa) * p10 + fa * p11);
      acc->d_scale += go * val;

      const real gs = go * scale;
      if (acc->d_src) {
        auto put = [&](int y, int x, real wgt) {
          if (y >= 0 && y < g.src_h && x >= 0 && x < g.src_w)
            acc->d_src[static_cast<size_t>(y) * g.src_w + x] += gs * wgt;
        };
        put(v0, u0, (real(1) - fa) * (real(1) - fb));
        put(v0, u0 + 1, fa * (real(1) - fb));
        put(v0 + 1, u0, (real(1) - fa) * fb);
        put(v0 + 1, u0 + 1, fa * fb);
      }

      const real dval_du = (real(1) - fb) * (p01 - p00) + fb * (p11 - p10);
      const real dval_dv = (real(1) - fa) * (p10 - p00) + fa * (p11 - p01);
      const real xo = g.xo_of(ox);
      acc->d_sx += gs * dval_du * xo * g.half_w;
      acc->d_tx += gs * dval_du * g.half_w;
      acc->d_sy += gs * dval_dv * yo * g.half_h;
      acc->d_ty += gs * dval_dv * g.half_h;
    }
  }
}

void check_params4(const Tensor& params) {
  if (params.size() != 4)
    throw std::invalid_argument("bilinear_sample: params must hold (sx, sy, tx, ty)");
  for (size_t i = 0; i < 4; ++i)
    if (!std::isfinite(static_cast<double>(params.at(i))))
      throw std::invalid_argument("bilinear_sample: non-finite transform");
}

void check_cell_vectors(const char* op, const Tensor& a, const Tensor& b, const Tensor& c,
                        const Tensor& d, size_t n) {
  if (a.size() != n || b.size() != n || c.size() != n || d.size() != n)
    throw std::invalid_argument(std::string(op) + ": per-cell parameter vectors disagree in length");
}

}  // namespace

Tensor bilinear_sample(const Tensor& src, const Tensor& params, int out_h, int out_w) {
  if (src.shape().size() != 4 || src.dim(0) != 1)
    throw std::invalid_argument("bilinear_sample: source must be [1,C,H,W]");
  check_params4(params);
  const int c = src.dim(1), h = src.dim(2), w = src.dim(3);
  const size_t plane = static_cast<size_t>(h) * w;
  const size_t oplane = static_cast<size_t>(out_h) * out_w;

  Tensor out = make_node("bilinear_sample", {1, c, out_h, out_w}, {src, params},
                         [c, h, w, out_h, out_w, plane, oplane](Node& self) {
    Node& psrc = *self.parents[0];
    Node& ppar = *self.parents[1];
    const SampleGrid g(ppar.value[0], ppar.value[1], ppar.value[2], ppar.value[3], h, w, out_h,
                       out_w);
    if (psrc.requires_grad) psrc.ensure_grad();
    if (ppar.requires_grad) ppar.ensure_grad();
    SampleGrads acc;
    for (int ch = 0; ch < c; ++ch) {
      acc.d_src = psrc.requires_grad ? psrc.grad.data() + static_cast<size_t>(ch) * plane : nullptr;
      sample_backward(psrc.value.data() + static_cast<size_t>(ch) * plane, g, real(1),
                      self.grad.data() + static_cast<size_t>(ch) * oplane, &acc);
    }
    if (ppar.requires_grad) {
      ppar.grad[0] += acc.d_sx;
      ppar.grad[1] += acc.d_sy;
      ppar.grad[2] += acc.d_tx;
      ppar.grad[3] += acc.d_ty;
    }
  });

  const SampleGrid g(params.at(0), params.at(1), params.at(2), params.at(3), h, w, out_h, out_w);
  for (int ch = 0; ch < c; ++ch)
    sample_forward(src.data() + static_cast<size_t>(ch) * plane, g, real(1), false,
                   out.data() + static_cast<size_t>(ch) * oplane);
  return out;
}

Tensor crop_batch(const Tensor& img, const Tensor& sx, const Tensor& sy, const Tensor& tx,
                  const Tensor& ty, int patch) {
  if (img.shape().size() != 4 || img.dim(0) != 1 || img.dim(1) != 1)
    throw std::invalid_argument("crop_batch: image must be [1,1,H,W]");
  const size_t n = sx.size();
  check_cell_vectors("crop_batch", sx, sy, tx, ty, n);
  const int h = img.dim(2), w = img.dim(3);
  const size_t pplane = static_cast<size_t>(patch) * patch;

  Tensor out = make_node("crop_batch", {static_cast<int>(n), 1, patch, patch},
                         {img, sx, sy, tx, ty}, [h, w, patch, pplane, n](Node& self) {
    Node& pimg = *self.parents[0];
    Node* pp[4] = {self.parents[1].get(), self.parents[2].get(), self.parents[3].get(),
                   self.parents[4].get()};
    if (pimg.requires_grad) pimg.ensure_grad();
    for (Node* p : pp)
      if (p->requires_grad) p->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const SampleGrid g(pp[0]->value[i], pp[1]->value[i], pp[2]->value[i], pp[3]->value[i], h, w,
                         patch, patch);
      SampleGrads acc;
      acc.d_src = pimg.requires_grad ? pimg.grad.data() : nullptr;
      sample_backward(pimg.value.data(), g, real(1), self.grad.data() + i * pplane, &acc);
      if (pp[0]->requires_grad) pp[0]->grad[i] += acc.d_sx;
      if (pp[1]->requires_grad) pp[1]->grad[i] += acc.d_sy;
      if (pp[2]->requires_grad) pp[2]->grad[i] += acc.d_tx;
      if (pp[3]->requires_grad) pp[3]->grad[i] += acc.d_ty;
    }
  });

  for (size_t i = 0; i < n; ++i) {
    const SampleGrid g(sx.at(i), sy.at(i), tx.at(i), ty.at(i), h, w, patch, patch);
    sample_forward(img.data(), g, real(1), false, out.data() + i * pplane);
  }
  return out;
}

Tensor stitch_add(const Tensor& patches, const Tensor& sx, const Tensor& sy, const Tensor& tx,
                  const Tensor& ty, const Tensor& presence, int out_h, int out_w) {
  if (patches.shape().size() != 4 || patches.dim(1) != 1)
    throw std::invalid_argument("stitch_add: patches must be [N,1,s,s]");
  const size_t n = static_cast<size_t>(patches.dim(0));
  check_cell_vectors("stitch_add", sx, sy, tx, ty, n);
  if (presence.size() != n)
    throw std::invalid_argument("stitch_add: presence length does not match patches");
  const int s = patches.dim(2);
  if (patches.dim(3) != s) throw std::invalid_argument("stitch_add: patches must be square");
  const size_t pplane = static_cast<size_t>(s) * s;

  Tensor out = make_node("stitch_add", {1, 1, out_h, out_w},
                         {patches, sx, sy, tx, ty, presence},
                         [s, pplane, out_h, out_w, n](Node& self) {
    Node& ppat = *self.parents[0];
    Node* pp[4] = {self.parents[1].get(), self.parents[2].get(), self.parents[3].get(),
                   self.parents[4].get()};
    Node& ppres = *self.parents[5];
    if (ppat.requires_grad) ppat.ensure_grad();
    for (Node* p : pp)
      if (p->requires_grad) p->ensure_grad();
    if (ppres.requires_grad) ppres.ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const SampleGrid g(pp[0]->value[i], pp[1]->value[i], pp[2]->value[i], pp[3]->value[i], s, s,
                         out_h, out_w);
      SampleGrads acc;
      acc.d_src = ppat.requires_grad ? ppat.grad.data() + i * pplane : nullptr;
      sample_backward(ppat.value.data() + i * pplane, g, ppres.value[i], self.grad.data(), &acc);
      if (pp[0]->requires_grad) pp[0]->grad[i] += acc.d_sx;
      if (pp[1]->requires_grad) pp[1]->grad[i] += acc.d_sy;
      if (pp[2]->requires_grad) pp[2]->grad[i] += acc.d_tx;
      if (pp[3]->requires_grad) pp[3]->grad[i] += acc.d_ty;
      if (ppres.requires_grad) ppres.grad[i] += acc.d_scale;
    }
  });

  // Accumulation runs in cell index order so results are reproducible.
  for (size_t i = 0; i < n; ++i) {
    const SampleGrid g(sx.at(i), sy.at(i), tx.at(i), ty.at(i), s, s, out_h, out_w);
    sample_forward(patches.data() + i * pplane, g, presence.at(i), true, out.data());
  }
  return out;
}

NDGRAD_NS_END
}  // namespace ndgrad
