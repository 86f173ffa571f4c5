#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "atdn/kernels.hpp"

// Reverse-mode autodiff on n-d arrays. Production training runs on
// Tensor<float>; tests instantiate Tensor<double> as the finite-difference
// shadow. Every op appends a tape node; backward() walks the tape in reverse
// topological order. A tape is confined to one thread; the kernels inside an
// op may use OpenMP (each output element is written by exactly one thread, so
// results are bit-identical for any thread count).

namespace atdn {

namespace detail {
inline std::int64_t next_node_id() {
  static std::atomic<std::int64_t> counter{0};
  return ++counter;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline long shape_numel(const std::vector<long>& shape) {
  long n = 1;
  for (long e : shape) {
    require(e > 0, "tensor extents must be positive");
    n *= e;
  }
  return n;
}
}  // namespace detail

template <typename T>
struct TensorNode {
  std::vector<long> shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily; accumulates until zeroed
  bool requires_grad = false;
  std::int64_t id = detail::next_node_id();
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // reads grad, adds into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<long> shape) {
    return make(std::move(shape), {}, false);
  }
  static Tensor constant(std::vector<long> shape, std::vector<T> data) {
    return make(std::move(shape), std::move(data), false);
  }
  static Tensor scalar(T v) { return make({1}, {v}, false); }
  static Tensor param(std::vector<long> shape, std::vector<T> data) {
    return make(std::move(shape), std::move(data), true);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<long>& shape() const { return node_->shape; }
  long numel() const { return static_cast<long>(node_->value.size()); }
  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  const std::vector<T>& grad() const {
    detail::require(node_->grad.size() == node_->value.size(),
                    "gradient not populated");
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::int64_t id() const { return node_->id; }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), T(0));
  }

  T item() const {
    detail::require(numel() == 1, "item() requires a scalar tensor");
    return node_->value[0];
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  static Tensor wrap(std::shared_ptr<TensorNode<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  static Tensor make(std::vector<long> shape, std::vector<T> data, bool grad) {
    auto n = std::make_shared<TensorNode<T>>();
    const long count = detail::shape_numel(shape);
    n->shape = std::move(shape);
    if (data.empty())
      n->value.assign(count, T(0));
    else {
      detail::require(static_cast<long>(data.size()) == count,
                      "data length does not match shape");
      n->value = std::move(data);
    }
    n->requires_grad = grad;
    return wrap(std::move(n));
  }

  std::shared_ptr<TensorNode<T>> node_;
};

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(const Tensor<T>& loss) {
  detail::require(loss.defined() && loss.numel() == 1,
                  "backward requires a scalar loss");
  detail::require(loss.requires_grad(),
                  "backward on a detached graph (no parameter reaches the loss)");

  // Post-order DFS, then replay reversed: node before its parents.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) n->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

// ---------------------------------------------------------------------------
// op helpers

namespace detail {

template <typename T>
Tensor<T> make_op(std::vector<long> shape, std::vector<T> value,
                  std::vector<Tensor<T>> parents,
                  std::function<void(TensorNode<T>&)> backprop) {
  auto n = std::make_shared<TensorNode<T>>();
  require(static_cast<long>(value.size()) == shape_numel(shape),
          "op produced mismatched value size");
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool grad = false;
  for (const auto& p : parents) {
    require(p.defined(), "op on undefined tensor");
    n->parents.push_back(p.node());
    grad = grad || p.requires_grad();
  }
  n->requires_grad = grad;
  if (grad) n->backprop = std::move(backprop);
  return Tensor<T>::wrap(std::move(n));
}

template <typename T, class Fwd, class Dydx>
Tensor<T> unary_elementwise(const Tensor<T>& x, Fwd fwd, Dydx dydx) {
  std::vector<T> y(x.value().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(x.value()[i]);
  return make_op<T>(
      x.shape(), std::move(y), {x}, [dydx](TensorNode<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          p.grad[i] += self.grad[i] * dydx(p.value[i], self.value[i]);
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and scalar ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<T> y(a.value().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [](TensorNode<T>& self) {
                              for (int k = 0; k < 2; ++k) {
                                auto& p = *self.parents[k];
                                if (!p.requires_grad) continue;
                                p.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  p.grad[i] += self.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "sub: shape mismatch");
  std::vector<T> y(a.value().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [](TensorNode<T>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pa.grad[i] += self.grad[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pb.grad[i] -= self.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<T> y(a.value().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [](TensorNode<T>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pa.grad[i] += self.grad[i] * pb.value[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pb.grad[i] += self.grad[i] * pa.value[i];
                              }
                            });
}

// Elementwise quotient; the denominator must be nonzero (callers guard, e.g.
// by adding an epsilon first).
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "div: shape mismatch");
  std::vector<T> y(a.value().size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] / b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [](TensorNode<T>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pa.grad[i] += self.grad[i] / pb.value[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
                              }
                            });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary_elementwise(
      x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_elementwise(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_elementwise(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_elementwise(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// exp with the argument capped so finite inputs stay finite.
template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  constexpr T cap = sizeof(T) == 4 ? T(80) : T(700);
  return detail::unary_elementwise(
      x, [](T v) { return std::exp(v < cap ? v : cap); },
      [](T v, T y) { return v < cap ? y : T(0); });
}

// log on the documented domain x > 0; smaller inputs are clamped.
template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  constexpr T lo = T(1e-30);
  return detail::unary_elementwise(
      x, [](T v) { return std::log(v > lo ? v : lo); },
      [](T v, T) { return v > lo ? T(1) / v : T(0); });
}

// sqrt on x >= 0; derivative defined as 0 at the origin.
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_elementwise(
      x, [](T v) { return std::sqrt(v > T(0) ? v : T(0)); },
      [](T v, T y) { return v > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary_elementwise(
      x, [](T v) { return std::fabs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.value()) acc += v;
  return detail::make_op<T>({1}, {acc}, {x}, [](TensorNode<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.value()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return detail::make_op<T>({1}, {acc * inv}, {x}, [inv](TensorNode<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0] * inv;
  });
}

template <typename T>
Tensor<T> sum_sq(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.value()) acc += v * v;
  return detail::make_op<T>({1}, {acc}, {x}, [](TensorNode<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      p.grad[i] += T(2) * p.value[i] * self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<long> shape) {
  detail::require(detail::shape_numel(shape) == x.numel(),
                  "reshape: element count must not change");
  std::vector<T> y = x.value();
  return detail::make_op<T>(std::move(shape), std::move(y), {x},
                            [](TensorNode<T>& self) {
                              auto& p = *self.parents[0];
                              p.ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                p.grad[i] += self.grad[i];
                            });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, long start, long len) {
  const auto& shape = x.shape();
  detail::require(axis >= 0 && axis < static_cast<int>(shape.size()),
                  "slice: axis out of range");
  detail::require(start >= 0 && len > 0 && start + len <= shape[axis],
                  "slice: range out of bounds");
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const long src_block = shape[axis] * inner;
  const long dst_block = len * inner;

  std::vector<long> out_shape = shape;
  out_shape[axis] = len;
  std::vector<T> y(outer * dst_block);
  for (long o = 0; o < outer; ++o)
    std::copy_n(x.value().data() + o * src_block + start * inner, dst_block,
                y.data() + o * dst_block);
  return detail::make_op<T>(
      std::move(out_shape), std::move(y), {x},
      [outer, inner, src_block, dst_block, start](TensorNode<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (long o = 0; o < outer; ++o) {
          const T* g = self.grad.data() + o * dst_block;
          T* pg = p.grad.data() + o * src_block + start * inner;
          for (long i = 0; i < dst_block; ++i) pg[i] += g[i];
        }
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const auto& base = parts[0].shape();
  detail::require(axis >= 0 && axis < static_cast<int>(base.size()),
                  "concat: axis out of range");
  long axis_total = 0;
  for (const auto& p : parts) {
    detail::require(p.shape().size() == base.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < base.size(); ++i)
      detail::require(static_cast<int>(i) == axis || p.shape()[i] == base[i],
                      "concat: shape mismatch off-axis");
    axis_total += p.shape()[axis];
  }
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= base[i];
  for (std::size_t i = axis + 1; i < base.size(); ++i) inner *= base[i];

  std::vector<long> out_shape = base;
  out_shape[axis] = axis_total;
  std::vector<T> y(outer * axis_total * inner);
  std::vector<long> offsets;  // running offset of each part along the axis
  long off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const long block = p.shape()[axis] * inner;
    for (long o = 0; o < outer; ++o)
      std::copy_n(p.value().data() + o * block, block,
                  y.data() + o * axis_total * inner + off * inner);
    off += p.shape()[axis];
  }
  return detail::make_op<T>(
      std::move(out_shape), std::move(y), parts,
      [outer, inner, axis_total, offsets](TensorNode<T>& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = *self.parents[k];
          if (!p.requires_grad) continue;
          p.ensure_grad();
          const long block = static_cast<long>(p.value.size()) / outer;
          for (long o = 0; o < outer; ++o) {
            const T* g = self.grad.data() + o * axis_total * inner + offsets[k] * inner;
            T* pg = p.grad.data() + o * block;
            for (long i = 0; i < block; ++i) pg[i] += g[i];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape().size() == 2 && b.shape().size() == 2,
                  "matmul: rank-2 tensors required");
  const long m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  detail::require(b.shape()[0] == k, "matmul: inner dimensions differ");
  std::vector<T> y(m * n);
  kernels::par::matmul(a.value().data(), b.value().data(), y.data(), m, k, n);
  return detail::make_op<T>({m, n}, std::move(y), {a, b},
                            [m, k, n](TensorNode<T>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                std::vector<T> da(pa.value.size());
                                kernels::par::matmul_grad_a(self.grad.data(), pb.value.data(),
                                                            da.data(), m, k, n);
                                for (std::size_t i = 0; i < da.size(); ++i) pa.grad[i] += da[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                std::vector<T> db(pb.value.size());
                                kernels::par::matmul_grad_b(self.grad.data(), pa.value.data(),
                                                            db.data(), m, k, n);
                                for (std::size_t i = 0; i < db.size(); ++i) pb.grad[i] += db[i];
                              }
                            });
}

// y[i, j] = x[i, j] + b[j]
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require(x.shape().size() == 2 && b.shape().size() == 1 &&
                      b.shape()[0] == x.shape()[1],
                  "add_rowvec: expected [N,M] plus [M]");
  const long rows = x.shape()[0], cols = x.shape()[1];
  std::vector<T> y(x.value().size());
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      y[i * cols + j] = x.value()[i * cols + j] + b.value()[j];
  return detail::make_op<T>(x.shape(), std::move(y), {x, b},
                            [rows, cols](TensorNode<T>& self) {
                              auto& px = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (px.requires_grad) {
                                px.ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  px.grad[i] += self.grad[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (long i = 0; i < rows; ++i)
                                  for (long j = 0; j < cols; ++j)
                                    pb.grad[j] += self.grad[i * cols + j];
                              }
                            });
}

// ---------------------------------------------------------------------------
// convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 long stride, long pad) {
  detail::require(x.shape().size() == 4 && w.shape().size() == 4,
                  "conv2d: input [N,C,H,W] and kernel [F,C,KH,KW] required");
  detail::require(stride >= 1 && pad >= 0, "conv2d: bad stride/padding");
  kernels::Conv2dShape s{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3],
                         w.shape()[0], w.shape()[2], w.shape()[3], stride, pad};
  detail::require(w.shape()[1] == s.c, "conv2d: channel mismatch");
  detail::require(s.kh <= s.h + 2 * pad && s.kw <= s.w + 2 * pad,
                  "conv2d: kernel larger than padded input");
  detail::require(s.out_h() >= 1 && s.out_w() >= 1, "conv2d: empty output");
  const bool has_bias = bias.defined();
  if (has_bias)
    detail::require(bias.shape().size() == 1 && bias.shape()[0] == s.f,
                    "conv2d: bias must be [F]");

  std::vector<T> y(s.n * s.f * s.out_h() * s.out_w());
  kernels::par::conv2d(x.value().data(), w.value().data(),
                       has_bias ? bias.value().data() : nullptr, y.data(), s);
  std::vector<Tensor<T>> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return detail::make_op<T>(
      {s.n, s.f, s.out_h(), s.out_w()}, std::move(y), parents,
      [s, has_bias](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          std::vector<T> dx(px.value.size());
          kernels::par::conv2d_grad_input(self.grad.data(), pw.value.data(), dx.data(), s);
          for (std::size_t i = 0; i < dx.size(); ++i) px.grad[i] += dx[i];
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          std::vector<T> dw(pw.value.size());
          kernels::par::conv2d_grad_weight(self.grad.data(), px.value.data(), dw.data(), s);
          for (std::size_t i = 0; i < dw.size(); ++i) pw.grad[i] += dw[i];
        }
        if (has_bias) {
          auto& pb = *self.parents[2];
          if (pb.requires_grad) {
            pb.ensure_grad();
            std::vector<T> db(pb.value.size());
            kernels::par::conv2d_grad_bias(self.grad.data(), db.data(), s);
            for (std::size_t i = 0; i < db.size(); ++i) pb.grad[i] += db[i];
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, long stride, long pad) {
  return conv2d(x, w, Tensor<T>(), stride, pad);
}

// Nearest-neighbour 2x upsampling of [N,C,H,W].
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  detail::require(x.shape().size() == 4, "upsample2: [N,C,H,W] required");
  const long nc = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  std::vector<T> y(x.value().size() * 4);
  for (long p = 0; p < nc; ++p)
    for (long i = 0; i < 2 * h; ++i)
      for (long j = 0; j < 2 * w; ++j)
        y[(p * 2 * h + i) * 2 * w + j] = x.value()[(p * h + i / 2) * w + j / 2];
  return detail::make_op<T>({x.shape()[0], x.shape()[1], 2 * h, 2 * w},
                            std::move(y), {x}, [nc, h, w](TensorNode<T>& self) {
                              auto& p0 = *self.parents[0];
                              p0.ensure_grad();
                              for (long p = 0; p < nc; ++p)
                                for (long i = 0; i < 2 * h; ++i)
                                  for (long j = 0; j < 2 * w; ++j)
                                    p0.grad[(p * h + i / 2) * w + j / 2] +=
                                        self.grad[(p * 2 * h + i) * 2 * w + j];
                            });
}

// ---------------------------------------------------------------------------
// SO(3) exponential / logarithm (Rodrigues), used by the windowed composition
// chain. Forward and backward are evaluated in double regardless of T.

namespace detail {

inline void skew3(const double r[3], double k[9]) {
  k[0] = 0;     k[1] = -r[2]; k[2] = r[1];
  k[3] = r[2];  k[4] = 0;     k[5] = -r[0];
  k[6] = -r[1]; k[7] = r[0];  k[8] = 0;
}

inline void mul3(const double* a, const double* b, double* y) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      y[i * 3 + j] = s;
    }
}

}  // namespace detail

template <typename T>
Tensor<T> rot_exp(const Tensor<T>& r) {
  detail::require(r.shape() == std::vector<long>{3}, "rot_exp: [3] axis-angle required");
  double rv[3] = {double(r.value()[0]), double(r.value()[1]), double(r.value()[2])};
  const double th2 = rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2];
  const double th = std::sqrt(th2);
  double a, b;
  if (th < 1e-8) {
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  double k[9], k2[9];
  detail::skew3(rv, k);
  detail::mul3(k, k, k2);
  std::vector<T> y(9);
  for (int i = 0; i < 9; ++i) {
    const double eye = (i % 4 == 0) ? 1.0 : 0.0;
    y[i] = static_cast<T>(eye + a * k[i] + b * k2[i]);
  }
  return detail::make_op<T>(
      {3, 3}, std::move(y), {r}, [th, th2, b, k, k2](TensorNode<T>& self) {
        // dR = R [J_r dr]x with the right Jacobian
        // J_r = I - b K + c K^2, c = (th - sin th) / th^3.
        double c;
        if (th < 1e-8)
          c = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0;
        else
          c = (th - std::sin(th)) / (th2 * th);
        double jr[9];
        for (int i = 0; i < 9; ++i) {
          const double eye = (i % 4 == 0) ? 1.0 : 0.0;
          jr[i] = eye - b * k[i] + c * k2[i];
        }
        double rmat[9];
        for (int i = 0; i < 9; ++i) rmat[i] = double(self.value[i]);
        double g[3];
        for (int m = 0; m < 3; ++m) {
          double em[3] = {0, 0, 0};
          em[m] = 1.0;
          double sk[9], bmat[9];
          detail::skew3(em, sk);
          detail::mul3(rmat, sk, bmat);
          double acc = 0;
          for (int i = 0; i < 9; ++i) acc += double(self.grad[i]) * bmat[i];
          g[m] = acc;
        }
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (int m = 0; m < 3; ++m) {
          double acc = 0;
          for (int i = 0; i < 3; ++i) acc += jr[i * 3 + m] * g[i];  // J_r^T g
          p.grad[m] += static_cast<T>(acc);
        }
      });
}

template <typename T>
Tensor<T> rot_log(const Tensor<T>& m) {
  detail::require(m.shape() == (std::vector<long>{3, 3}),
                  "rot_log: [3,3] rotation required");
  double R[9];
  for (int i = 0; i < 9; ++i) R[i] = double(m.value()[i]);
  const double tr = R[0] + R[4] + R[8];
  const double u_raw = (tr - 1.0) * 0.5;
  const bool clamped = u_raw <= -1.0 || u_raw >= 1.0;
  const double u = std::clamp(u_raw, -1.0, 1.0);
  const double th = std::acos(u);
  const double s = std::sin(th);
  const double v[3] = {R[7] - R[5], R[2] - R[6], R[3] - R[1]};

  std::vector<T> y(3);
  bool degenerate = false;
  double cc = 0.5;
  if (s < 1e-15) {
    if (th < 1.0) {
      // th ~ 0: r = v/2 (v itself is ~0)
      for (int i = 0; i < 3; ++i) y[i] = static_cast<T>(0.5 * v[i]);
    } else {
      // th ~ pi: recover the axis from the diagonal; gradient is undefined
      // here and treated as zero.
      degenerate = true;
      double axis[3];
      for (int i = 0; i < 3; ++i)
        axis[i] = std::sqrt(std::max((R[i * 4] - u) / (1.0 - u), 0.0));
      int major = axis[1] > axis[0] ? 1 : 0;
      if (axis[2] > axis[major]) major = 2;
      const int o1 = (major + 1) % 3, o2 = (major + 2) % 3;
      if (R[major * 3 + o1] + R[o1 * 3 + major] < 0) axis[o1] = -axis[o1];
      if (R[major * 3 + o2] + R[o2 * 3 + major] < 0) axis[o2] = -axis[o2];
      for (int i = 0; i < 3; ++i) y[i] = static_cast<T>(th * axis[i]);
    }
  } else {
    cc = th < 1e-12 ? 0.5 : th / (2.0 * s);
    for (int i = 0; i < 3; ++i) y[i] = static_cast<T>(cc * v[i]);
  }

  return detail::make_op<T>(
      {3}, std::move(y), {m},
      [degenerate, clamped, cc, th, s, v](TensorNode<T>& self) {
        if (degenerate) return;
        auto& p = *self.parents[0];
        p.ensure_grad();
        const double g[3] = {double(self.grad[0]), double(self.grad[1]),
                             double(self.grad[2])};
        // r = c(th) * vee(R - R^T); the c'(th) * dth/dR term acts on the
        // diagonal. Taylor guard for small angles.
        double cp;
        if (th < 1e-5)
          cp = th / 6.0 + 7.0 * th * th * th / 360.0;
        else
          cp = (s - th * std::cos(th)) / (2.0 * s * s);
        p.grad[7] += static_cast<T>(cc * g[0]);
        p.grad[5] -= static_cast<T>(cc * g[0]);
        p.grad[2] += static_cast<T>(cc * g[1]);
        p.grad[6] -= static_cast<T>(cc * g[1]);
        p.grad[3] += static_cast<T>(cc * g[2]);
        p.grad[1] -= static_cast<T>(cc * g[2]);
        if (!clamped && s >= 1e-15) {
          const double k[3] = {v[0] / (2.0 * s), v[1] / (2.0 * s), v[2] / (2.0 * s)};
          const double diag = -cp * (g[0] * k[0] + g[1] * k[1] + g[2] * k[2]);
          p.grad[0] += static_cast<T>(diag);
          p.grad[4] += static_cast<T>(diag);
          p.grad[8] += static_cast<T>(diag);
        }
      });
}

// m [3,3] times v [3] -> [3]
template <typename T>
Tensor<T> matvec(const Tensor<T>& m, const Tensor<T>& v) {
  return reshape(matmul(m, reshape(v, {3, 1})), {3});
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.value())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace atdn
