#include "ndgrad/optim.hpp"

#include <cmath>

namespace ndgrad {
NDGRAD_NS_BEGIN

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), real(0));
    v_.emplace_back(p.size(), real(0));
  }
}

void Adam::step() {
  ++step_;
  const real bc1 = real(1) - static_cast<real>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_)));
  const real bc2 = real(1) - static_cast<real>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_)));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    const bool has_g = p.has_grad();
    real* x = p.data();
    const real* g = has_g ? p.grad().data() : nullptr;
    real* m = m_[pi].data();
    real* v = v_[pi].data();
    for (size_t i = 0; i < p.size(); ++i) {
      const real gi = has_g ? g[i] : real(0);
      m[i] = cfg_.beta1 * m[i] + (real(1) - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (real(1) - cfg_.beta2) * gi * gi;
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

NDGRAD_NS_END
}  // namespace ndgrad
