// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Dense row-major tensors with a reverse-mode differentiation tape.
//
// A Tensor is a shared handle to a tape node. Operations on tensors that
// require gradients record a backward closure on the result node; calling
// backward() on a scalar walks the recorded graph in reverse topological
// order and accumulates into every reachable node's grad buffer. Leaves keep
// their gradients (accumulating across calls until zero_grad()); interior
// buffers are released once propagated.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vocsep/errors.hpp"

namespace vocsep::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}  // namespace detail

// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() noexcept { return detail::grad_mode_enabled; }

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Grad buffer of the node, allocated on first use.
  T* grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value.assign(numel(shape), T(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (values.size() != numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{v}, requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<T> grad() {
    node_->grad_buffer();
    return node_->grad;
  }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  T at(std::size_t i, std::size_t j) const { return node_->value[i * dim(1) + j]; }

  // New leaf holding a copy of the values; no tape history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(v), requires_grad);
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Builds the result tensor; the backward closure is attached only when a
// parent requires gradients and tape recording is enabled.
template <typename T, typename Backward>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      Backward&& backward) {
  Tensor<T> out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  auto* node = out.node();
  node->requires_grad = true;
  node->parents.reserve(inputs.size());
  for (auto& in : inputs) node->parents.push_back(in.node_ptr());
  node->backward = std::forward<Backward>(backward);
  return out;
}

// Grad buffer of parent `i`, or nullptr when it does not take gradients.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer() : nullptr;
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

// Broadcasting is restricted to trailing-dimension expansion: the smaller
// operand's shape must equal a suffix of the larger one (or be a scalar).
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  const Shape& big = numel(a) >= numel(b) ? a : b;
  const Shape& small = numel(a) >= numel(b) ? b : a;
  if (numel(small) == 1) return big;
  if (small.size() <= big.size() &&
      std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()))) {
    return big;
  }
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                   " are not broadcast-compatible");
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd, GradA ga,
                    GradB gb) {
  Shape shape = broadcast_shape(a.shape(), b.shape(), name);
  const std::size_t n = numel(shape);
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  std::vector<T> out(n);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i % na], pb[i % nb]);
  }
  return make_result<T>(std::move(shape), std::move(out), {a, b}, [ga, gb, n, na, nb](Node<T>& self) {
    const T* g = self.grad.data();
    const T* va = self.parents[0]->value.data();
    const T* vb = self.parents[1]->value.data();
    if (T* da = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i % na] += g[i] * ga(va[i % na], vb[i % nb]);
    }
    if (T* db = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i % nb] += g[i] * gb(va[i % na], vb[i % nb]);
    }
  });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary_op(const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  std::vector<T> out(a.size());
  const T* pa = a.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(pa[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [deriv](Node<T>& self) {
    if (T* da = parent_grad(self, 0)) {
      const T* x = self.parents[0]->value.data();
      const T* y = self.value.data();
      const T* g = self.grad.data();
      for (std::size_t i = 0; i < self.value.size(); ++i) da[i] += g[i] * deriv(x[i], y[i]);
    }
  });
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary_op(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return detail::unary_op(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
T sigmoid_value(T x) {
  // Split on sign so exp() never overflows.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return sigmoid_value(x); },
                          [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

// Subgradient 0 at the kink.
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// x^alpha on x >= 0. The derivative at x = 0 is taken as 0.
template <typename T>
Tensor<T> power(const Tensor<T>& a, T alpha) {
  return detail::unary_op(
      a,
      [alpha](T x) {
        if (x < T(0)) throw ConfigError("power: negative base " + std::to_string(static_cast<double>(x)));
        return std::pow(x, alpha);
      },
      [alpha](T x, T) { return x > T(0) ? alpha * std::pow(x, alpha - T(1)) : T(0); });
}

// Gradient passes where lo <= x <= hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return detail::unary_op(a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
                          [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return detail::make_result<T>(Shape{1}, {s}, {a}, [](Node<T>& self) {
    if (T* da = detail::parent_grad(self, 0)) {
      const T g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) da[i] += g;
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// mean((a - b)^2)
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse_loss: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return detail::make_result<T>(Shape{1}, {s / static_cast<T>(n)}, {a, b}, [n](Node<T>& self) {
    const T* va = self.parents[0]->value.data();
    const T* vb = self.parents[1]->value.data();
    const T g = self.grad[0] * T(2) / static_cast<T>(n);
    if (T* da = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += g * (va[i] - vb[i]);
    }
    if (T* db = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] -= g * (va[i] - vb[i]);
    }
  });
}

// ---- linear algebra and shape manipulation ---------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  {
    detail::ConstMatMap<T> A(a.data().data(), m, k);
    detail::ConstMatMap<T> B(b.data().data(), k, n);
    detail::MatMap<T> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return detail::make_result<T>(Shape{m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    detail::ConstMatMap<T> G(self.grad.data(), m, n);
    if (T* da = detail::parent_grad(self, 0)) {
      detail::ConstMatMap<T> B(self.parents[1]->value.data(), k, n);
      detail::MatMap<T>(da, m, k).noalias() += G * B.transpose();
    }
    if (T* db = detail::parent_grad(self, 1)) {
      detail::ConstMatMap<T> A(self.parents[0]->value.data(), m, k);
      detail::MatMap<T>(db, k, n).noalias() += A.transpose() * G;
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank(a.shape(), 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(r * c);
  detail::MatMap<T>(out.data(), c, r) = detail::ConstMatMap<T>(a.data().data(), r, c).transpose();
  return detail::make_result<T>(Shape{c, r}, std::move(out), {a}, [r, c](Node<T>& self) {
    if (T* da = detail::parent_grad(self, 0)) {
      detail::MatMap<T>(da, r, c) += detail::ConstMatMap<T>(self.grad.data(), c, r).transpose();
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    if (T* da = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  detail::require_rank(a.shape(), 2, "slice_rows");
  const std::size_t cols = a.dim(1);
  if (begin + count > a.dim(0)) throw ShapeError("slice_rows: range exceeds " + shape_str(a.shape()));
  const T* src = a.data().data() + begin * cols;
  std::vector<T> out(src, src + count * cols);
  return detail::make_result<T>(Shape{count, cols}, std::move(out), {a}, [begin, cols](Node<T>& self) {
    if (T* da = detail::parent_grad(self, 0)) {
      T* dst = da + begin * cols;
      for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  detail::require_rank(a.shape(), 2, "slice_cols");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (begin + count > cols) throw ShapeError("slice_cols: range exceeds " + shape_str(a.shape()));
  std::vector<T> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = a.data().data() + r * cols + begin;
    std::copy(src, src + count, out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  return detail::make_result<T>(Shape{rows, count}, std::move(out), {a},
                                [rows, cols, begin, count](Node<T>& self) {
                                  if (T* da = detail::parent_grad(self, 0)) {
                                    for (std::size_t r = 0; r < rows; ++r) {
                                      for (std::size_t j = 0; j < count; ++j) {
                                        da[r * cols + begin + j] += self.grad[r * count + j];
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_rows");
    if (p.dim(1) != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result<T>(Shape{rows, cols}, std::move(out), parts, [](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t n = self.parents[i]->value.size();
      if (T* dp = detail::parent_grad(self, i)) {
        for (std::size_t j = 0; j < n; ++j) dp[j] += self.grad[offset + j];
      }
      offset += n;
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_cols");
    if (p.dim(0) != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.dim(1);
  }
  std::vector<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.data().data() + r * pc, pc, out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
    }
    offset += pc;
  }
  return detail::make_result<T>(Shape{rows, cols}, std::move(out), parts, [rows, cols](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t pc = self.parents[i]->shape[1];
      if (T* dp = detail::parent_grad(self, i)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < pc; ++j) dp[r * pc + j] += self.grad[r * cols + off + j];
        }
      }
      off += pc;
    }
  });
}

// ---- backward --------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ConfigError("backward: loss does not depend on any tensor requiring gradients");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward) {
      node->grad_buffer();
      node->backward(*node);
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

}  // namespace vocsep::ag
