#include <cblas.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <type_traits>
#include <vector>

#include "ndgrad/ops.hpp"

extern "C" void openblas_set_num_threads(int);

namespace ndgrad {
NDGRAD_NS_BEGIN

namespace {

void init_blas_threads() {
  static const bool done = [] {
    const unsigned hc = std::thread::hardware_concurrency();
    openblas_set_num_threads(static_cast<int>(std::min(2u, hc == 0 ? 1u : hc)));
    return true;
  }();
  (void)done;
}

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  init_blas_threads();
  const CBLAS_TRANSPOSE ta = trans_a ? CblasTrans : CblasNoTrans;
  const CBLAS_TRANSPOSE tb = trans_b ? CblasTrans : CblasNoTrans;
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

struct ConvDims {
  int n, c, h, w;  // input
  int f, kh, kw;   // kernel
  int stride, pad;
  int oh, ow;      // output
  int k() const { return c * kh * kw; }
  size_t ohw() const { return static_cast<size_t>(oh) * ow; }
  size_t chw() const { return static_cast<size_t>(c) * h * w; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& kern, int stride, int padding) {
  if (x.shape().size() != 4 || kern.shape().size() != 4)
    throw std::invalid_argument("conv2d: input and kernel must be 4-d");
  ConvDims d;
  d.n = x.dim(0);
  d.c = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.f = kern.dim(0);
  d.kh = kern.dim(2);
  d.kw = kern.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (kern.dim(1) != d.c)
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(kern.dim(1)) +
                                " do not match input channels " + std::to_string(d.c));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
  return d;
}

// Column and scratch buffers are kept at ~2 MB so they stay cache resident
// between the unpack and the GEMM that consumes them.
constexpr size_t kColBudget = size_t(16) << 20;  // floats

// Unpacks output rows [oy0, oy1) of one sample into a [K, row_stride] column
// block; this sample's values land at columns [col_off, col_off+(oy1-oy0)*ow).
void im2col(const real* x, const ConvDims& d, int oy0, int oy1, real* col, size_t row_stride,
            size_t col_off) {
  const int tw = d.ow;
  for (int c = 0; c < d.c; ++c) {
    const real* plane = x + static_cast<size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        real* row = col + (static_cast<size_t>(c) * d.kh * d.kw + ki * d.kw + kj) * row_stride +
                    col_off;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * d.stride - d.pad + ki;
          real* dst = row + static_cast<size_t>(oy - oy0) * tw;
          if (iy < 0 || iy >= d.h) {
            std::memset(dst, 0, sizeof(real) * static_cast<size_t>(tw));
            continue;
          }
          const real* src = plane + static_cast<size_t>(iy) * d.w;
          if (d.stride == 1) {
            const int x0 = -d.pad + kj;
            int ox = 0;
            for (; ox < tw && x0 + ox < 0; ++ox) dst[ox] = real(0);
            const int run_end = std::min(tw, d.w - x0);
            if (run_end > ox) {
              std::memcpy(dst + ox, src + x0 + ox, sizeof(real) * static_cast<size_t>(run_end - ox));
              ox = run_end;
            }
            for (; ox < tw; ++ox) dst[ox] = real(0);
          } else {
            for (int ox = 0; ox < tw; ++ox) {
              const int ix = ox * d.stride - d.pad + kj;
              dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : real(0);
            }
          }
        }
      }
    }
  }
}

// Scatter-add of a column block back into one sample's input gradient.
void col2im_add(const real* col, const ConvDims& d, int oy0, int oy1, size_t row_stride,
                size_t col_off, real* dx) {
  for (int c = 0; c < d.c; ++c) {
    real* plane = dx + static_cast<size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const real* row = col +
                          (static_cast<size_t>(c) * d.kh * d.kw + ki * d.kw + kj) * row_stride +
                          col_off;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          const real* src = row + static_cast<size_t>(oy - oy0) * d.ow;
          real* dst = plane + static_cast<size_t>(iy) * d.w;
          if (d.stride == 1) {
            const int x0 = -d.pad + kj;
            const int ox_lo = std::max(0, -x0);
            const int ox_hi = std::min(d.ow, d.w - x0);
            real* base = dst + x0;
            for (int ox = ox_lo; ox < ox_hi; ++ox) base[ox] += src[ox];
          } else {
            for (int ox = 0; ox < d.ow; ++ox) {
              const int ix = ox * d.stride - d.pad + kj;
              if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

std::vector<real>& scratch(int slot, size_t n) {
  thread_local std::vector<real> buf[3];
  if (buf[slot].size() < n) buf[slot].resize(n);
  return buf[slot];
}

// Batch several small samples into one GEMM when a whole sample's column
// block fits the budget; otherwise tile a single sample by output rows.
int sample_chunk(const ConvDims& d) {
  const size_t per_sample = static_cast<size_t>(std::max(d.k(), d.f)) * d.ohw();
  if (per_sample == 0) return 1;
  return static_cast<int>(std::clamp<size_t>(kColBudget / per_sample, 1, static_cast<size_t>(d.n)));
}

int row_tile(const ConvDims& d) {
  const size_t per_row = static_cast<size_t>(d.k()) * d.ow;
  return static_cast<int>(std::clamp<size_t>(kColBudget / std::max<size_t>(1, per_row), 1,
                                             static_cast<size_t>(d.oh)));
}

}  // namespace

namespace {

Tensor conv2d_impl(const Tensor& x, const Tensor& kern, const Tensor* bias, int stride,
                   int padding, bool fuse_relu) {
  const ConvDims d = conv_dims(x, kern, stride, padding);
  if (bias && bias->size() != static_cast<size_t>(d.f))
    throw std::invalid_argument("conv2d: bias length does not match output channels");

  std::vector<Tensor> parents{x, kern};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias != nullptr;
  const size_t ohw = d.ohw();
  const int k = d.k();
  const int chunk = sample_chunk(d);

  Tensor out = make_node(fuse_relu ? "conv2d_relu" : "conv2d", {d.n, d.f, d.oh, d.ow},
                         std::move(parents), [d, has_bias, fuse_relu](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    const size_t ohw = d.ohw();
    const int k = d.k();
    if (px.requires_grad) px.ensure_grad();
    if (pk.requires_grad) pk.ensure_grad();

    // dY, with the relu mask applied when fused (out == 0 kills the grad)
    auto dy_at = [&](size_t idx) {
      return fuse_relu && self.value[idx] <= real(0) ? real(0) : self.grad[idx];
    };

    if (has_bias) {
      Node& pb = *self.parents[2];
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (int n = 0; n < d.n; ++n)
          for (int f = 0; f < d.f; ++f) {
            const size_t base = (static_cast<size_t>(n) * d.f + f) * ohw;
            real acc = 0;
            for (size_t i = 0; i < ohw; ++i) acc += dy_at(base + i);
            pb.grad[static_cast<size_t>(f)] += acc;
          }
      }
    }
    if (!px.requires_grad && !pk.requires_grad) return;

    const int chunk = sample_chunk(d);
    if (chunk > 1) {
      std::vector<real>& col = scratch(0, static_cast<size_t>(k) * chunk * ohw);
      std::vector<real>& dy_pack = scratch(1, static_cast<size_t>(d.f) * chunk * ohw);
      std::vector<real>& dcol =
          scratch(2, px.requires_grad ? static_cast<size_t>(k) * chunk * ohw : 0);
      for (int n0 = 0; n0 < d.n; n0 += chunk) {
        const int m = std::min(chunk, d.n - n0);
        const size_t cols = static_cast<size_t>(m) * ohw;
        for (int i = 0; i < m; ++i)
          for (int f = 0; f < d.f; ++f) {
            real* dst = dy_pack.data() + static_cast<size_t>(f) * cols +
                        static_cast<size_t>(i) * ohw;
            const size_t base = (static_cast<size_t>(n0 + i) * d.f + f) * ohw;
            if (fuse_relu) {
              for (size_t j = 0; j < ohw; ++j)
                dst[j] = self.value[base + j] > real(0) ? self.grad[base + j] : real(0);
            } else {
              std::memcpy(dst, self.grad.data() + base, sizeof(real) * ohw);
            }
          }
        if (pk.requires_grad) {
          for (int i = 0; i < m; ++i)
            im2col(px.value.data() + static_cast<size_t>(n0 + i) * d.chw(), d, 0, d.oh,
                   col.data(), cols, static_cast<size_t>(i) * ohw);
          gemm(false, true, d.f, k, static_cast<int>(cols), real(1), dy_pack.data(),
               static_cast<int>(cols), col.data(), static_cast<int>(cols), real(1),
               pk.grad.data(), k);
        }
        if (px.requires_grad) {
          gemm(true, false, k, static_cast<int>(cols), d.f, real(1), pk.value.data(), k,
               dy_pack.data(), static_cast<int>(cols), real(0), dcol.data(),
               static_cast<int>(cols));
          for (int i = 0; i < m; ++i)
            col2im_add(dcol.data(), d, 0, d.oh, cols, static_cast<size_t>(i) * ohw,
                       px.grad.data() + static_cast<size_t>(n0 + i) * d.chw());
        }
      }
    } else {
      const int tile = row_tile(d);
      std::vector<real>& col = scratch(0, static_cast<size_t>(k) * tile * d.ow);
      std::vector<real>& dy_buf =
          scratch(1, fuse_relu ? static_cast<size_t>(d.f) * tile * d.ow : 0);
      std::vector<real>& dcol =
          scratch(2, px.requires_grad ? static_cast<size_t>(k) * tile * d.ow : 0);
      for (int n = 0; n < d.n; ++n) {
        for (int oy0 = 0; oy0 < d.oh; oy0 += tile) {
          const int rows = std::min(tile, d.oh - oy0);
          const size_t cols = static_cast<size_t>(rows) * d.ow;
          const real* dy;
          int ld_dy;
          if (fuse_relu) {
            for (int f = 0; f < d.f; ++f) {
              const size_t base = (static_cast<size_t>(n) * d.f + f) * ohw +
                                  static_cast<size_t>(oy0) * d.ow;
              real* dst = dy_buf.data() + static_cast<size_t>(f) * cols;
              for (size_t j = 0; j < cols; ++j)
                dst[j] = self.value[base + j] > real(0) ? self.grad[base + j] : real(0);
            }
            dy = dy_buf.data();
            ld_dy = static_cast<int>(cols);
          } else {
            dy = self.grad.data() + static_cast<size_t>(n) * d.f * ohw +
                 static_cast<size_t>(oy0) * d.ow;
            ld_dy = static_cast<int>(ohw);
          }
          if (pk.requires_grad) {
            im2col(px.value.data() + static_cast<size_t>(n) * d.chw(), d, oy0, oy0 + rows,
                   col.data(), cols, 0);
            gemm(false, true, d.f, k, static_cast<int>(cols), real(1), dy, ld_dy, col.data(),
                 static_cast<int>(cols), real(1), pk.grad.data(), k);
          }
          if (px.requires_grad) {
            gemm(true, false, k, static_cast<int>(cols), d.f, real(1), pk.value.data(), k, dy,
                 ld_dy, real(0), dcol.data(), static_cast<int>(cols));
            col2im_add(dcol.data(), d, oy0, oy0 + rows, cols, 0,
                       px.grad.data() + static_cast<size_t>(n) * d.chw());
          }
        }
      }
    }
  });

  if (chunk > 1) {
    std::vector<real>& col = scratch(0, static_cast<size_t>(k) * chunk * ohw);
    std::vector<real>& cbuf = scratch(1, static_cast<size_t>(d.f) * chunk * ohw);
    for (int n0 = 0; n0 < d.n; n0 += chunk) {
      const int m = std::min(chunk, d.n - n0);
      const size_t cols = static_cast<size_t>(m) * ohw;
      for (int i = 0; i < m; ++i)
        im2col(x.data() + static_cast<size_t>(n0 + i) * d.chw(), d, 0, d.oh, col.data(), cols,
               static_cast<size_t>(i) * ohw);
      gemm(false, false, d.f, static_cast<int>(cols), k, real(1), kern.data(), k, col.data(),
           static_cast<int>(cols), real(0), cbuf.data(), static_cast<int>(cols));
      for (int i = 0; i < m; ++i)
        for (int f = 0; f < d.f; ++f)
          std::memcpy(out.data() + (static_cast<size_t>(n0 + i) * d.f + f) * ohw,
                      cbuf.data() + static_cast<size_t>(f) * cols + static_cast<size_t>(i) * ohw,
                      sizeof(real) * ohw);
    }
  } else {
    const int tile = row_tile(d);
    std::vector<real>& col = scratch(0, static_cast<size_t>(k) * tile * d.ow);
    for (int n = 0; n < d.n; ++n) {
      for (int oy0 = 0; oy0 < d.oh; oy0 += tile) {
        const int rows = std::min(tile, d.oh - oy0);
        const size_t cols = static_cast<size_t>(rows) * d.ow;
        im2col(x.data() + static_cast<size_t>(n) * d.chw(), d, oy0, oy0 + rows, col.data(), cols,
               0);
        gemm(false, false, d.f, static_cast<int>(cols), k, real(1), kern.data(), k, col.data(),
             static_cast<int>(cols), real(0),
             out.data() + static_cast<size_t>(n) * d.f * ohw + static_cast<size_t>(oy0) * d.ow,
             static_cast<int>(ohw));
      }
    }
  }
  if (bias) {
    real* y = out.data();
    for (int n = 0; n < d.n; ++n)
      for (int f = 0; f < d.f; ++f) {
        const real b = bias->at(static_cast<size_t>(f));
        real* row = y + (static_cast<size_t>(n) * d.f + f) * ohw;
        for (size_t i = 0; i < ohw; ++i) row[i] += b;
      }
  }
  if (fuse_relu) {
    real* y = out.data();
    for (size_t i = 0; i < out.size(); ++i) y[i] = std::max(y[i], real(0));
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kern, const Tensor* bias, int stride, int padding) {
  return conv2d_impl(x, kern, bias, stride, padding, false);
}

Tensor conv2d_relu(const Tensor& x, const Tensor& kern, const Tensor* bias, int stride,
                   int padding) {
  return conv2d_impl(x, kern, bias, stride, padding, true);
}

Tensor maxpool2d(const Tensor& x, int size) {
  if (x.shape().size() != 4) throw std::invalid_argument("maxpool2d: expected a 4-d tensor");
  if (size < 1) throw std::invalid_argument("maxpool2d: size must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % size != 0 || w % size != 0)
    throw std::invalid_argument("maxpool2d: spatial dims " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by " + std::to_string(size));
  const int oh = h / size, ow = w / size;
  const size_t out_n = static_cast<size_t>(n) * c * oh * ow;

  // argmax flat indices into the input, first occurrence (row-major) on ties
  auto argmax = std::make_shared<std::vector<int64_t>>(out_n);
  Tensor out = make_node("maxpool2d", {n, c, oh, ow}, {x}, [argmax](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      px.grad[static_cast<size_t>((*argmax)[i])] += self.grad[i];
  });

  const real* xv = x.data();
  real* y = out.data();
  size_t o = 0;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = (static_cast<size_t>(b) * c + ch) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          real best = xv[base + static_cast<size_t>(oy * size) * w + ox * size];
          int64_t best_i = static_cast<int64_t>(base + static_cast<size_t>(oy * size) * w + ox * size);
          for (int dy = 0; dy < size; ++dy) {
            for (int dx = 0; dx < size; ++dx) {
              const size_t idx = base + static_cast<size_t>(oy * size + dy) * w + (ox * size + dx);
              if (xv[idx] > best) {
                best = xv[idx];
                best_i = static_cast<int64_t>(idx);
              }
            }
          }
          y[o] = best;
          (*argmax)[o] = best_i;
        }
      }
    }
  }
  return out;
}

Tensor upsample2x(const Tensor& x) {
  if (x.shape().size() != 4) throw std::invalid_argument("upsample2x: expected a 4-d tensor");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out = make_node("upsample2x", {n, c, 2 * h, 2 * w}, {x}, [n, c, h, w](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const int oh = 2 * h, ow = 2 * w;
    for (int b = 0; b < n * c; ++b) {
      const real* g = self.grad.data() + static_cast<size_t>(b) * oh * ow;
      real* dst = px.grad.data() + static_cast<size_t>(b) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x2 = 0; x2 < w; ++x2)
          dst[static_cast<size_t>(y) * w + x2] +=
              g[static_cast<size_t>(2 * y) * ow + 2 * x2] +
              g[static_cast<size_t>(2 * y) * ow + 2 * x2 + 1] +
              g[static_cast<size_t>(2 * y + 1) * ow + 2 * x2] +
              g[static_cast<size_t>(2 * y + 1) * ow + 2 * x2 + 1];
    }
  });

  const real* xv = x.data();
  real* y = out.data();
  const int ow = 2 * w;
  for (int b = 0; b < n * c; ++b) {
    const real* src = xv + static_cast<size_t>(b) * h * w;
    real* dst = y + static_cast<size_t>(b) * 4 * h * w;
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const real v = src[static_cast<size_t>(yy) * w + xx];
        dst[static_cast<size_t>(2 * yy) * ow + 2 * xx] = v;
        dst[static_cast<size_t>(2 * yy) * ow + 2 * xx + 1] = v;
        dst[static_cast<size_t>(2 * yy + 1) * ow + 2 * xx] = v;
        dst[static_cast<size_t>(2 * yy + 1) * ow + 2 * xx + 1] = v;
      }
    }
  }
  return out;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1)
    throw std::invalid_argument("dense: expected x[N,D], w[D,E], b[E]");
  const int n = x.dim(0), d = x.dim(1), e = w.dim(1);
  if (w.dim(0) != d || b.dim(0) != e)
    throw std::invalid_argument("dense: inner dimensions disagree: x" + shape_str(x.shape()) +
                                " w" + shape_str(w.shape()) + " b" + shape_str(b.shape()));

  Tensor out = make_node("dense", {n, e}, {x, w, b}, [n, d, e](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const real* dy = self.grad.data();
    if (px.requires_grad) {
      px.ensure_grad();
      // dX += dY * W^T
      gemm(false, true, n, d, e, real(1), dy, e, pw.value.data(), e, real(1), px.grad.data(), d);
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      // dW += X^T * dY
      gemm(true, false, d, e, n, real(1), px.value.data(), d, dy, e, real(1), pw.grad.data(), e);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < e; ++c) pb.grad[static_cast<size_t>(c)] += dy[static_cast<size_t>(r) * e + c];
    }
  });

  // Y = X * W, then add bias per row
  gemm(false, false, n, e, d, real(1), x.data(), d, w.data(), e, real(0), out.data(), e);
  real* y = out.data();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < e; ++c) y[static_cast<size_t>(r) * e + c] += b.at(static_cast<size_t>(c));
  return out;
}

NDGRAD_NS_END
}  // namespace ndgrad
