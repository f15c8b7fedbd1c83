#include "ndgrad/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ndgrad {
NDGRAD_NS_BEGIN

namespace {
std::atomic<uint64_t> g_seq{1};

// NDGRAD_PROFILE=1 prints cumulative per-op backward times at process exit.
struct BackwardProfile {
  bool enabled = std::getenv("NDGRAD_PROFILE") != nullptr;
  std::map<std::string, double> ms;
  ~BackwardProfile() {
    if (!enabled || ms.empty()) return;
    std::fprintf(stderr, "-- backward time by op --\n");
    for (const auto& [op, t] : ms) std::fprintf(stderr, "%-16s %10.1f ms\n", op.c_str(), t);
  }
};
BackwardProfile g_profile;
}

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  return full(std::move(s), real(0), requires_grad);
}

Tensor Tensor::full(Shape s, real v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_numel(s), v);
  n->shape = std::move(s);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape s, std::vector<real> v, bool requires_grad) {
  if (shape_numel(s) != v.size())
    throw std::invalid_argument("from_data: shape " + shape_str(s) + " does not match " +
                                std::to_string(v.size()) + " values");
  auto n = std::make_shared<Node>();
  n->shape = std::move(s);
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(real v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::uniform_init(Shape s, int fan_in, Rng& rng, bool requires_grad) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max(1, fan_in)));
  Tensor t = zeros(std::move(s), requires_grad);
  for (auto& x : t.values()) x = static_cast<real>(rng.uniform(-bound, bound));
  return t;
}

Tensor Tensor::randn(Shape s, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(s), requires_grad);
  for (auto& x : t.values()) x = static_cast<real>(rng.normal());
  return t;
}

real Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of size " + std::to_string(size()));
  return n_->value[0];
}

Tensor make_node(const char* op, Shape out_shape, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  auto n = std::make_shared<Node>();
  n->value.assign(shape_numel(out_shape), real(0));
  n->shape = std::move(out_shape);
  n->op = op;
  n->requires_grad = rg;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar tensor");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Collect reachable grad-tracking nodes, then replay in reverse creation order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  for (Node* n : order) n->ensure_grad();
  root->grad[0] += real(1);
  if (g_profile.enabled) {
    for (Node* n : order) {
      if (!n->backward_fn) continue;
      const auto t0 = std::chrono::steady_clock::now();
      n->backward_fn(*n);
      g_profile.ms[n->op] +=
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    return;
  }
  for (Node* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

NDGRAD_NS_END
}  // namespace ndgrad
