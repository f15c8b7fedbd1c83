#include <cmath>
#include <stdexcept>

#include "ndgrad/ops.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

void accumulate(Node& parent, const std::vector<real>& g) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace

Tensor activation(const Tensor& x, Act kind) {
  const size_t n = x.size();
  const char* name = "activation";
  switch (kind) {
    case Act::kSigmoid: name = "sigmoid"; break;
    case Act::kTanh: name = "tanh"; break;
    case Act::kExp: name = "exp"; break;
    case Act::kRelu: name = "relu"; break;
    case Act::kLog: name = "log"; break;
  }
  if (kind == Act::kLog) {
    for (size_t i = 0; i < n; ++i)
      if (!(x.at(i) > real(0))) throw std::invalid_argument("log: input must be positive");
  }
  Tensor out = make_node(name, x.shape(), {x}, [kind](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const size_t m = self.size();
    for (size_t i = 0; i < m; ++i) {
      const real y = self.value[i];
      const real xi = px.value[i];
      real d = real(0);
      switch (kind) {
        case Act::kSigmoid: d = y * (real(1) - y); break;
        case Act::kTanh: d = real(1) - y * y; break;
        case Act::kExp: d = y; break;
        case Act::kRelu: d = xi > real(0) ? real(1) : real(0); break;
        case Act::kLog: d = real(1) / xi; break;
      }
      px.grad[i] += self.grad[i] * d;
    }
  });
  real* y = out.data();
  const real* xv = x.data();
  switch (kind) {
    case Act::kSigmoid:
      for (size_t i = 0; i < n; ++i) y[i] = real(1) / (real(1) + std::exp(-xv[i]));
      break;
    case Act::kTanh:
      for (size_t i = 0; i < n; ++i) y[i] = std::tanh(xv[i]);
      break;
    case Act::kExp:
      for (size_t i = 0; i < n; ++i) y[i] = std::exp(xv[i]);
      break;
    case Act::kRelu:
      for (size_t i = 0; i < n; ++i) y[i] = xv[i] > real(0) ? xv[i] : real(0);
      break;
    case Act::kLog:
      for (size_t i = 0; i < n; ++i) y[i] = std::log(xv[i]);
      break;
  }
  return out;
}

Tensor sqrt_act(const Tensor& x) {
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i)
    if (!(x.at(i) > real(0))) throw std::invalid_argument("sqrt: input must be positive");
  Tensor out = make_node("sqrt", x.shape(), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      px.grad[i] += self.grad[i] * real(0.5) / self.value[i];
  });
  real* y = out.data();
  const real* xv = x.data();
  for (size_t i = 0; i < n; ++i) y[i] = std::sqrt(xv[i]);
  return out;
}

Tensor square(const Tensor& x) {
  Tensor out = make_node("square", x.shape(), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i)
      px.grad[i] += self.grad[i] * real(2) * px.value[i];
  });
  real* y = out.data();
  const real* xv = x.data();
  for (size_t i = 0; i < x.size(); ++i) y[i] = xv[i] * xv[i];
  return out;
}

Tensor clamp(const Tensor& x, real lo, real hi) {
  Tensor out = make_node("clamp", x.shape(), {x}, [lo, hi](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) {
      const real xi = px.value[i];
      if (xi > lo && xi < hi) px.grad[i] += self.grad[i];
    }
  });
  real* y = out.data();
  const real* xv = x.data();
  for (size_t i = 0; i < x.size(); ++i) y[i] = std::min(hi, std::max(lo, xv[i]));
  return out;
}

Tensor affine_scalar(const Tensor& x, real scale, real shift) {
  Tensor out = make_node("affine_scalar", x.shape(), {x}, [scale](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) px.grad[i] += self.grad[i] * scale;
  });
  real* y = out.data();
  const real* xv = x.data();
  for (size_t i = 0; i < x.size(); ++i) y[i] = scale * xv[i] + shift;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = make_node("add", a.shape(), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
  real* y = out.data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = a.at(i) + b.at(i);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = make_node("sub", a.shape(), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
  real* y = out.data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = a.at(i) - b.at(i);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = make_node("mul", a.shape(), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
  real* y = out.data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = a.at(i) * b.at(i);
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  Tensor out = make_node("div", a.shape(), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.size(); ++i)
        pb.grad[i] -= self.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
    }
  });
  real* y = out.data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = a.at(i) / b.at(i);
  return out;
}

Tensor min_pairwise(const Tensor& a, const Tensor& b) {
  check_same_shape("min_pairwise", a, b);
  Tensor out = make_node("min_pairwise", a.shape(), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (size_t i = 0; i < self.size(); ++i) {
      if (pa.value[i] <= pb.value[i]) {
        if (pa.requires_grad) pa.grad[i] += self.grad[i];
      } else if (pb.requires_grad) {
        pb.grad[i] += self.grad[i];
      }
    }
  });
  real* y = out.data();
  for (size_t i = 0; i < a.size(); ++i) y[i] = std::min(a.at(i), b.at(i));
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_node("sum", {1}, {x}, [](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const real g = self.grad[0];
    for (size_t i = 0; i < px.size(); ++i) px.grad[i] += g;
  });
  double acc = 0;
  for (size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.at(i));
  out.data()[0] = static_cast<real>(acc);
  return out;
}

Tensor mean(const Tensor& x) {
  const real inv = real(1) / static_cast<real>(x.size());
  Tensor out = make_node("mean", {1}, {x}, [inv](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const real g = self.grad[0] * inv;
    for (size_t i = 0; i < px.size(); ++i) px.grad[i] += g;
  });
  double acc = 0;
  for (size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.at(i));
  out.data()[0] = static_cast<real>(acc * static_cast<double>(inv));
  return out;
}

Tensor sum_rows(const Tensor& x) {
  if (x.shape().size() != 2) throw std::invalid_argument("sum_rows: expected a 2-d tensor");
  const int n = x.dim(0), d = x.dim(1);
  Tensor out = make_node("sum_rows", {n}, {x}, [n, d](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int r = 0; r < n; ++r) {
      const real g = self.grad[static_cast<size_t>(r)];
      real* row = px.grad.data() + static_cast<size_t>(r) * d;
      for (int c = 0; c < d; ++c) row[c] += g;
    }
  });
  const real* xv = x.data();
  real* y = out.data();
  for (int r = 0; r < n; ++r) {
    double acc = 0;
    for (int c = 0; c < d; ++c) acc += static_cast<double>(xv[static_cast<size_t>(r) * d + c]);
    y[r] = static_cast<real>(acc);
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape s) {
  if (shape_numel(s) != x.size())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(s) +
                                " changes element count");
  Tensor out = make_node("reshape", std::move(s), {x}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
  });
  std::copy(x.data(), x.data() + x.size(), out.data());
  return out;
}

Tensor slice_channel(const Tensor& x, int c) {
  if (x.shape().size() != 4) throw std::invalid_argument("slice_channel: expected a 4-d tensor");
  const int n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c < 0 || c >= ch) throw std::invalid_argument("slice_channel: channel out of range");
  const size_t plane = static_cast<size_t>(h) * w;
  Tensor out = make_node("slice_channel", {n, 1, h, w}, {x}, [n, ch, plane, c](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int b = 0; b < n; ++b) {
      const real* g = self.grad.data() + static_cast<size_t>(b) * plane;
      real* dst = px.grad.data() + (static_cast<size_t>(b) * ch + c) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] += g[i];
    }
  });
  for (int b = 0; b < n; ++b) {
    const real* src = x.data() + (static_cast<size_t>(b) * ch + c) * plane;
    std::copy(src, src + plane, out.data() + static_cast<size_t>(b) * plane);
  }
  return out;
}

NDGRAD_NS_END
}  // namespace ndgrad
