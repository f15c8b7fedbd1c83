#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ndgrad/real.hpp"
#include "ndgrad/rng.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

using Shape = std::vector<int>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One recorded operation. Nodes form the computation graph; `seq` is the
// creation order, and the backward pass visits reachable nodes in exact
// reverse creation order.
struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
  void add_grad(size_t i, real g) { grad[i] += g; }
};

// Value-semantic handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, real v, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<real> v, bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);
  // Fan-in-scaled uniform init: U(-sqrt(1/fan_in), sqrt(1/fan_in)).
  static Tensor uniform_init(Shape s, int fan_in, Rng& rng, bool requires_grad = true);
  static Tensor randn(Shape s, Rng& rng, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  size_t size() const { return n_->value.size(); }

  real* data() { return n_->value.data(); }
  const real* data() const { return n_->value.data(); }
  std::vector<real>& values() { return n_->value; }
  const std::vector<real>& values() const { return n_->value; }

  real item() const;
  real at(size_t i) const { return n_->value[i]; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  const std::vector<real>& grad() const { return n_->grad; }
  std::vector<real>& grad() { return n_->grad; }
  void zero_grad() {
    if (!n_->grad.empty()) n_->grad.assign(n_->value.size(), real(0));
  }

  std::shared_ptr<Node> node() const { return n_; }

  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

// Allocates an output node wired to its parents. `requires_grad` is inferred;
// when no parent tracks gradients the backward closure is dropped.
Tensor make_node(const char* op, Shape out_shape, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward_fn);

// Reverse-mode sweep from a scalar loss. Every requires_grad tensor reachable
// from `loss` gets its grad populated (accumulated across fan-out).
void backward(const Tensor& loss);

NDGRAD_NS_END
}  // namespace ndgrad
