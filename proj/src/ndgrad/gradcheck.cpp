#include "ndgrad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ndgrad {
NDGRAD_NS_BEGIN

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = Tensor::from_data(x.shape(), x.values(), true);
  Tensor y = f(probe);
  if (y.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  backward(y);
  if (!probe.has_grad()) throw std::invalid_argument("grad_check: f ignores its input");
  const std::vector<real> analytic = probe.grad();

  Tensor probe2 = Tensor::from_data(x.shape(), x.values(), false);
  double max_rel = 0.0;
  for (size_t i = 0; i < probe2.size(); ++i) {
    const real orig = probe2.at(i);
    probe2.data()[i] = orig + static_cast<real>(eps);
    const double fp = static_cast<double>(f(probe2).item());
    probe2.data()[i] = orig - static_cast<real>(eps);
    const double fm = static_cast<double>(f(probe2).item());
    probe2.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  }
  return max_rel;
}

NDGRAD_NS_END
}  // namespace ndgrad
