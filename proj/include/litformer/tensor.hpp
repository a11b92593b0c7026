#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "litformer/errors.hpp"
#include "litformer/opcount.hpp"

namespace lit {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

namespace detail {
inline thread_local int no_grad_depth = 0;
inline thread_local bool finite_checks = true;
}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }
inline bool finite_checks_enabled() { return detail::finite_checks; }
inline void set_finite_checks(bool on) { detail::finite_checks = on; }

// Disables tape recording inside its scope (inference / metric evaluation).
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major tensor (last axis fastest) with reverse-mode autodiff.
// A Tensor is a shared handle to a graph node; ops run eagerly and record a
// backprop closure while gradients are enabled.
template <typename R>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<R> value;
    std::vector<R> grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value.assign(static_cast<std::size_t>(numel(shape)), R(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, R v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.value().begin(), t.value().end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<R> data, bool requires_grad = false) {
    if (static_cast<std::int64_t>(data.size()) != numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(R v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  explicit operator bool() const { return static_cast<bool>(node_); }
  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t extent(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::vector<R>& value() { return node_->value; }
  const std::vector<R>& value() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<R>& grad() {
    ensure_grad();
    return node_->grad;
  }
  const std::vector<R>& grad() const {
    const_cast<Tensor*>(this)->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), R(0));
  }

  R item() const {
    if (size() != 1) throw ContractError("item() requires a scalar tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Internal: build a result node wired to its parents.
  static Tensor make_result(Shape shape, std::vector<R> value,
                            std::vector<Tensor> parents,
                            std::function<void(Node&)> backprop,
                            const char* op_name) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (detail::finite_checks) {
      for (R v : n->value) {
        if (!std::isfinite(static_cast<double>(v)))
          throw NumericsError(std::string("non-finite value produced by ") + op_name);
      }
    }
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg && grad_enabled()) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node_);
      n->backprop = std::move(backprop);
    }
    return Tensor(std::move(n));
  }

  void ensure_grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), R(0));
  }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

template <typename R>
Tensor<R> reshape(Tensor<R> x, Shape shape);

// Accumulates d(loss)/d(t) into every reachable requires_grad tensor.
// Repeated calls without zeroing accumulate.
template <typename R>
void backward(const Tensor<R>& loss) {
  if (loss.size() != 1) throw ContractError("backward() requires a scalar loss");
  using Node = typename Tensor<R>::Node;
  // Iterative post-order over the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior nodes restart from zero each sweep; leaves keep accumulating.
  for (Node* node : order)
    if (node->backprop && !node->grad.empty()) std::fill(node->grad.begin(), node->grad.end(), R(0));
  loss.node()->grad.assign(1, R(0));
  loss.node()->grad[0] = R(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace detail {

template <typename R>
void check_same_shape(Tensor<R> a, Tensor<R> b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename R>
void accumulate(std::vector<R>& dst, const std::vector<R>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

template <typename R>
Tensor<R> add(Tensor<R> a, Tensor<R> b) {
  detail::check_same_shape(a, b, "add");
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](typename Tensor<R>::Node& n) mutable {
        if (a.requires_grad()) detail::accumulate(a.grad(), n.grad);
        if (b.requires_grad()) detail::accumulate(b.grad(), n.grad);
      },
      "add");
}

template <typename R>
Tensor<R> sub(Tensor<R> a, Tensor<R> b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](typename Tensor<R>::Node& n) mutable {
        if (a.requires_grad()) detail::accumulate(a.grad(), n.grad);
        if (b.requires_grad()) {
          auto& g = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
      },
      "sub");
}

template <typename R>
Tensor<R> mul(Tensor<R> a, Tensor<R> b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  count_macs(out.size(), "elementwise");
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](typename Tensor<R>::Node& n) mutable {
        if (a.requires_grad()) {
          auto& g = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b.value()[i];
        }
        if (b.requires_grad()) {
          auto& g = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a.value()[i];
        }
      },
      "mul");
}

template <typename R>
Tensor<R> divt(Tensor<R> a, Tensor<R> b) {
  detail::check_same_shape(a, b, "div");
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  count_macs(out.size(), "elementwise");
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](typename Tensor<R>::Node& n) mutable {
        if (a.requires_grad()) {
          auto& g = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / b.value()[i];
        }
        if (b.requires_grad()) {
          auto& g = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) {
            R bv = b.value()[i];
            g[i] -= n.grad[i] * a.value()[i] / (bv * bv);
          }
        }
      },
      "div");
}

template <typename R>
Tensor<R> scale(Tensor<R> a, R c) {
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  count_macs(out.size(), "elementwise");
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a},
      [a, c](typename Tensor<R>::Node& n) mutable {
        if (a.requires_grad()) {
          auto& g = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
        }
      },
      "scale");
}

template <typename R>
Tensor<R> add_scalar(Tensor<R> a, R c) {
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a},
      [a](typename Tensor<R>::Node& n) mutable {
        if (a.requires_grad()) detail::accumulate(a.grad(), n.grad);
      },
      "add_scalar");
}

template <typename R>
Tensor<R> sqrt_t(Tensor<R> a) {
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a.value()[i]);
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a},
      [a](typename Tensor<R>::Node& n) mutable {
        if (!a.requires_grad()) return;
        auto& g = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / (R(2) * n.value[i]);
      },
      "sqrt");
}

template <typename R>
Tensor<R> abs_t(Tensor<R> a) {
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.value()[i]);
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a},
      [a](typename Tensor<R>::Node& n) mutable {
        if (!a.requires_grad()) return;
        auto& g = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          R v = a.value()[i];
          R s = (v > R(0)) ? R(1) : (v < R(0) ? R(-1) : R(0));
          g[i] += n.grad[i] * s;
        }
      },
      "abs");
}

// Gaussian-error rectifier, exact erf form. gelu(0) == 0.
template <typename R>
Tensor<R> gelu(Tensor<R> a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  std::vector<R> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = static_cast<double>(a.value()[i]);
    out[i] = static_cast<R>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
  }
  count_macs(out.size(), "activation");
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a},
      [a](typename Tensor<R>::Node& n) mutable {
        if (!a.requires_grad()) return;
        auto& g = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          double x = static_cast<double>(a.value()[i]);
          double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
          double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
          g[i] += n.grad[i] * static_cast<R>(cdf + x * pdf);
        }
      },
      "gelu");
}

// ---------------------------------------------------------------------------
// broadcasting binary ops
//
// Broadcasting is explicit: b has the same rank as a, with extent 1 on each
// axis named in expand_axes and matching extents elsewhere. Gradients w.r.t.
// b reduce-sum over the expanded axes.

namespace detail {

template <typename R>
void check_broadcast(Tensor<R> a, Tensor<R> b, const std::vector<int>& expand_axes,
                     const char* op) {
  if (a.rank() != b.rank())
    throw ShapeError(std::string(op) + ": broadcast requires equal rank, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<bool> expand(static_cast<std::size_t>(a.rank()), false);
  for (int ax : expand_axes) {
    if (ax < 0 || ax >= a.rank()) throw ShapeError(std::string(op) + ": broadcast axis out of range");
    expand[static_cast<std::size_t>(ax)] = true;
  }
  for (int i = 0; i < a.rank(); ++i) {
    if (expand[static_cast<std::size_t>(i)]) {
      if (b.extent(i) != 1)
        throw ShapeError(std::string(op) + ": expanded axis " + std::to_string(i) +
                         " of b must have extent 1");
    } else if (a.extent(i) != b.extent(i)) {
      throw ShapeError(std::string(op) + ": extent mismatch on axis " + std::to_string(i) + ": " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
}

// Row-major strides with 0 on singleton axes of b relative to a's shape.
inline std::vector<std::int64_t> broadcast_strides(const Shape& a, const Shape& b) {
  std::vector<std::int64_t> strides(b.size());
  std::int64_t s = 1;
  for (int i = static_cast<int>(b.size()) - 1; i >= 0; --i) {
    strides[static_cast<std::size_t>(i)] = (b[static_cast<std::size_t>(i)] == 1 && a[static_cast<std::size_t>(i)] != 1) ? 0 : s;
    s *= b[static_cast<std::size_t>(i)];
  }
  return strides;
}

// Iterates over a's index space, producing (flat_a, flat_b) pairs.
template <typename R, typename Fn>
void broadcast_for_each(const Shape& ashape, const Shape& bshape, Fn&& fn) {
  const auto bstride = broadcast_strides(ashape, bshape);
  const int rank = static_cast<int>(ashape.size());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
  const std::int64_t total = numel(ashape);
  std::int64_t ib = 0;
  for (std::int64_t ia = 0; ia < total; ++ia) {
    fn(ia, ib);
    for (int ax = rank - 1; ax >= 0; --ax) {
      auto uax = static_cast<std::size_t>(ax);
      ib += bstride[uax];
      if (++idx[uax] < ashape[uax]) break;
      idx[uax] = 0;
      ib -= bstride[uax] * ashape[uax];
    }
  }
}

enum class BinKind { kAdd, kSub, kMul, kDiv };

template <typename R>
Tensor<R> broadcast_binary(Tensor<R> a, Tensor<R> b, const std::vector<int>& expand_axes,
                           BinKind kind, const char* op) {
  check_broadcast(a, b, expand_axes, op);
  std::vector<R> out(a.value().size());
  const auto& av = a.value();
  const auto& bv = b.value();
  broadcast_for_each<R>(a.shape(), b.shape(), [&](std::int64_t ia, std::int64_t ib) {
    switch (kind) {
      case BinKind::kAdd: out[static_cast<std::size_t>(ia)] = av[static_cast<std::size_t>(ia)] + bv[static_cast<std::size_t>(ib)]; break;
      case BinKind::kSub: out[static_cast<std::size_t>(ia)] = av[static_cast<std::size_t>(ia)] - bv[static_cast<std::size_t>(ib)]; break;
      case BinKind::kMul: out[static_cast<std::size_t>(ia)] = av[static_cast<std::size_t>(ia)] * bv[static_cast<std::size_t>(ib)]; break;
      case BinKind::kDiv: out[static_cast<std::size_t>(ia)] = av[static_cast<std::size_t>(ia)] / bv[static_cast<std::size_t>(ib)]; break;
    }
  });
  if (kind == BinKind::kMul || kind == BinKind::kDiv) count_macs(out.size(), "elementwise");
  return Tensor<R>::make_result(
      a.shape(), std::move(out), {a, b},
      [a, b, kind](typename Tensor<R>::Node& n) mutable {
        const auto& av = a.value();
        const auto& bv = b.value();
        if (a.requires_grad()) {
          auto& ga = a.grad();
          broadcast_for_each<R>(a.shape(), b.shape(), [&](std::int64_t ia, std::int64_t ib) {
            R g = n.grad[static_cast<std::size_t>(ia)];
            switch (kind) {
              case BinKind::kAdd: case BinKind::kSub: ga[static_cast<std::size_t>(ia)] += g; break;
              case BinKind::kMul: ga[static_cast<std::size_t>(ia)] += g * bv[static_cast<std::size_t>(ib)]; break;
              case BinKind::kDiv: ga[static_cast<std::size_t>(ia)] += g / bv[static_cast<std::size_t>(ib)]; break;
            }
          });
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          broadcast_for_each<R>(a.shape(), b.shape(), [&](std::int64_t ia, std::int64_t ib) {
            R g = n.grad[static_cast<std::size_t>(ia)];
            switch (kind) {
              case BinKind::kAdd: gb[static_cast<std::size_t>(ib)] += g; break;
              case BinKind::kSub: gb[static_cast<std::size_t>(ib)] -= g; break;
              case BinKind::kMul: gb[static_cast<std::size_t>(ib)] += g * av[static_cast<std::size_t>(ia)]; break;
              case BinKind::kDiv: {
                R bvv = bv[static_cast<std::size_t>(ib)];
                gb[static_cast<std::size_t>(ib)] -= g * av[static_cast<std::size_t>(ia)] / (bvv * bvv);
                break;
              }
            }
          });
        }
      },
      op);
}

}  // namespace detail

template <typename R>
Tensor<R> broadcast_add(Tensor<R> a, Tensor<R> b, const std::vector<int>& expand_axes) {
  return detail::broadcast_binary(a, b, expand_axes, detail::BinKind::kAdd, "broadcast_add");
}
template <typename R>
Tensor<R> broadcast_sub(Tensor<R> a, Tensor<R> b, const std::vector<int>& expand_axes) {
  return detail::broadcast_binary(a, b, expand_axes, detail::BinKind::kSub, "broadcast_sub");
}
template <typename R>
Tensor<R> broadcast_mul(Tensor<R> a, Tensor<R> b, const std::vector<int>& expand_axes) {
  return detail::broadcast_binary(a, b, expand_axes, detail::BinKind::kMul, "broadcast_mul");
}
template <typename R>
Tensor<R> broadcast_div(Tensor<R> a, Tensor<R> b, const std::vector<int>& expand_axes) {
  return detail::broadcast_binary(a, b, expand_axes, detail::BinKind::kDiv, "broadcast_div");
}

// ---------------------------------------------------------------------------
// matmul

namespace detail {

// c[B,m,n] (+)= op(a) x op(b) for one batch slice.
template <typename R>
void gemm_slice(const R* a, const R* b, R* c, std::int64_t m, std::int64_t k, std::int64_t n,
                bool ta, bool tb) {
  if (!ta && !tb) {
    for (std::int64_t i = 0; i < m; ++i) {
      R* crow = c + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        R av = a[i * k + p];
        const R* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    // a: m x k, b: n x k
    for (std::int64_t i = 0; i < m; ++i) {
      const R* arow = a + i * k;
      R* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const R* brow = b + j * k;
        R acc = 0;
        for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (ta && !tb) {
    // a: k x m, b: k x n
    for (std::int64_t p = 0; p < k; ++p) {
      const R* arow = a + p * m;
      const R* brow = b + p * n;
      for (std::int64_t i = 0; i < m; ++i) {
        R av = arow[i];
        R* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    // a: k x m, b: n x k
    for (std::int64_t i = 0; i < m; ++i) {
      R* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const R* brow = b + j * k;
        R acc = 0;
        for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        crow[j] += acc;
      }
    }
  }
}

}  // namespace detail

// Batched matrix product over rank-3 tensors (B, rows, cols), with optional
// transposition of either operand. MACs: B*m*k*n.
template <typename R>
Tensor<R> bmm(Tensor<R> a, Tensor<R> b, bool ta = false, bool tb = false) {
  if (a.rank() != 3 || b.rank() != 3) throw ShapeError("bmm: operands must be rank 3");
  const std::int64_t B = a.extent(0);
  if (b.extent(0) != B) throw ShapeError("bmm: batch extents disagree");
  const std::int64_t m = ta ? a.extent(2) : a.extent(1);
  const std::int64_t ka = ta ? a.extent(1) : a.extent(2);
  const std::int64_t kb = tb ? b.extent(2) : b.extent(1);
  const std::int64_t n = tb ? b.extent(1) : b.extent(2);
  if (ka != kb)
    throw ShapeError("bmm: inner extents disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<R> out(static_cast<std::size_t>(B * m * n), R(0));
  const std::int64_t a_sz = a.extent(1) * a.extent(2);
  const std::int64_t b_sz = b.extent(1) * b.extent(2);
  for (std::int64_t s = 0; s < B; ++s) {
    detail::gemm_slice(a.value().data() + s * a_sz, b.value().data() + s * b_sz,
                       out.data() + s * m * n, m, ka, n, ta, tb);
  }
  count_macs(static_cast<std::uint64_t>(B * m * ka * n));
  return Tensor<R>::make_result(
      {B, m, n}, std::move(out), {a, b},
      [a, b, ta, tb, B, m, n, ka, a_sz, b_sz](typename Tensor<R>::Node& nd) mutable {
        // dA and dB are matmuls of the output gradient with the other operand.
        for (std::int64_t s = 0; s < B; ++s) {
          const R* g = nd.grad.data() + s * m * n;
          const R* av = a.value().data() + s * a_sz;
          const R* bv = b.value().data() + s * b_sz;
          if (a.requires_grad()) {
            R* ga = a.grad().data() + s * a_sz;
            if (!ta && !tb) detail::gemm_slice(g, bv, ga, m, n, ka, false, true);
            else if (!ta && tb) detail::gemm_slice(g, bv, ga, m, n, ka, false, false);
            else if (ta && !tb) detail::gemm_slice(bv, g, ga, ka, n, m, false, true);
            else detail::gemm_slice(bv, g, ga, ka, n, m, true, true);
          }
          if (b.requires_grad()) {
            R* gb = b.grad().data() + s * b_sz;
            if (!ta && !tb) detail::gemm_slice(av, g, gb, ka, m, n, true, false);
            else if (!ta && tb) detail::gemm_slice(g, av, gb, n, m, ka, true, false);
            else if (ta && !tb) detail::gemm_slice(av, g, gb, ka, m, n, false, false);
            else detail::gemm_slice(g, av, gb, n, m, ka, true, true);
          }
        }
      },
      "bmm");
}

// 2D matrix product a[m,k] x b[k,n].
template <typename R>
Tensor<R> matmul(Tensor<R> a, Tensor<R> b, bool ta = false, bool tb = false) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
  Tensor<R> a3 = reshape(a, {1, a.extent(0), a.extent(1)});
  Tensor<R> b3 = reshape(b, {1, b.extent(0), b.extent(1)});
  Tensor<R> c3 = bmm(a3, b3, ta, tb);
  return reshape(c3, {c3.extent(1), c3.extent(2)});
}

// ---------------------------------------------------------------------------
// softmax, reductions, reshape

// Numerically stabilized softmax along one axis.
template <typename R>
Tensor<R> softmax(Tensor<R> x, int axis) {
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: axis out of range");
  const Shape& s = x.shape();
  std::int64_t inner = 1, outer = 1;
  const std::int64_t len = s[static_cast<std::size_t>(axis)];
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
  std::vector<R> out(x.value().size());
  const auto& v = x.value();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      R mx = v[static_cast<std::size_t>(base)];
      for (std::int64_t l = 1; l < len; ++l) mx = std::max(mx, v[static_cast<std::size_t>(base + l * inner)]);
      R total = 0;
      for (std::int64_t l = 0; l < len; ++l) {
        R e = std::exp(v[static_cast<std::size_t>(base + l * inner)] - mx);
        out[static_cast<std::size_t>(base + l * inner)] = e;
        total += e;
      }
      for (std::int64_t l = 0; l < len; ++l) out[static_cast<std::size_t>(base + l * inner)] /= total;
    }
  }
  count_macs(out.size(), "softmax");
  return Tensor<R>::make_result(
      x.shape(), std::move(out), {x},
      [x, outer, inner, len](typename Tensor<R>::Node& n) mutable {
        if (!x.requires_grad()) return;
        auto& g = x.grad();
        for (std::int64_t o = 0; o < outer; ++o) {
          for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            R dot = 0;
            for (std::int64_t l = 0; l < len; ++l) {
              auto i = static_cast<std::size_t>(base + l * inner);
              dot += n.grad[i] * n.value[i];
            }
            for (std::int64_t l = 0; l < len; ++l) {
              auto i = static_cast<std::size_t>(base + l * inner);
              g[i] += (n.grad[i] - dot) * n.value[i];
            }
          }
        }
      },
      "softmax");
}

// Sum over the named axes; reduced axes are kept with extent 1.
template <typename R>
Tensor<R> reduce_sum(Tensor<R> x, const std::vector<int>& axes) {
  Shape out_shape = x.shape();
  std::vector<bool> reduced(static_cast<std::size_t>(x.rank()), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= x.rank()) throw ShapeError("reduce_sum: axis out of range");
    reduced[static_cast<std::size_t>(ax)] = true;
    out_shape[static_cast<std::size_t>(ax)] = 1;
  }
  std::vector<R> out(static_cast<std::size_t>(numel(out_shape)), R(0));
  detail::broadcast_for_each<R>(x.shape(), out_shape, [&](std::int64_t ia, std::int64_t ib) {
    out[static_cast<std::size_t>(ib)] += x.value()[static_cast<std::size_t>(ia)];
  });
  return Tensor<R>::make_result(
      out_shape, std::move(out), {x},
      [x, out_shape](typename Tensor<R>::Node& n) mutable {
        if (!x.requires_grad()) return;
        auto& g = x.grad();
        detail::broadcast_for_each<R>(x.shape(), out_shape, [&](std::int64_t ia, std::int64_t ib) {
          g[static_cast<std::size_t>(ia)] += n.grad[static_cast<std::size_t>(ib)];
        });
      },
      "reduce_sum");
}

template <typename R>
Tensor<R> reduce_mean(const Tensor<R>& x, const std::vector<int>& axes) {
  std::int64_t count = 1;
  for (int ax : axes) count *= x.extent(ax);
  return scale(reduce_sum(x, axes), R(1) / static_cast<R>(count));
}

template <typename R>
Tensor<R> sum_all(const Tensor<R>& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.rank()));
  for (int i = 0; i < x.rank(); ++i) axes[static_cast<std::size_t>(i)] = i;
  return reshape(reduce_sum(x, axes), {1});
}

template <typename R>
Tensor<R> mean_all(const Tensor<R>& x) {
  return scale(sum_all(x), R(1) / static_cast<R>(x.size()));
}

template <typename R>
Tensor<R> reshape(Tensor<R> x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                     shape_str(shape));
  std::vector<R> out = x.value();
  return Tensor<R>::make_result(
      std::move(shape), std::move(out), {x},
      [x](typename Tensor<R>::Node& n) mutable {
        if (x.requires_grad()) detail::accumulate(x.grad(), n.grad);
      },
      "reshape");
}

}  // namespace lit
