#pragma once

#include <vector>

#include "ndgrad/tensor.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

struct AdamConfig {
  real lr = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

// Bias-corrected adaptive moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  // One update from the gradients currently stored on the parameters.
  // Parameters without an allocated gradient are treated as zero-gradient.
  void step();
  void zero_grad();

  int64_t step_count() const { return step_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real>> m_, v_;
  AdamConfig cfg_;
  int64_t step_ = 0;
};

NDGRAD_NS_END
}  // namespace ndgrad
