#pragma once

#include <functional>

#include "ndgrad/tensor.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

// Central finite differences per coordinate against the backward() gradient.
// `f` must be deterministic. Returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-6).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-3);

NDGRAD_NS_END
}  // namespace ndgrad
