#pragma once

// Elementwise arithmetic, activations, reductions and shape operations.
//
// Broadcasting aligns trailing axes. Extents must match or be 1 on one side.
// Ranks may differ by at most one (an implicit leading batch axis); a
// single-element tensor broadcasts against anything.

#include <cmath>
#include <limits>
#include <vector>

#include "dro/tensor.hpp"

namespace dro {

enum class ElementwiseOp { add, sub, mul, div, minimum };
enum class Activation { sigmoid, tanh, relu, softplus };
enum class ReduceOp { sum, mean };

namespace detail {

struct BroadcastMap {
  Shape out;
  std::vector<std::size_t> ia, ib;
  bool trivial = false;  // identical shapes, identity index maps
};

inline BroadcastMap broadcast(const Shape& a, const Shape& b) {
  BroadcastMap m;
  if (a == b) {
    m.out = a;
    m.trivial = true;
    return m;
  }
  const std::size_t na = numel(a), nb = numel(b);
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  if (std::abs(ra - rb) > 1 && na != 1 && nb != 1)
    throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                         ": rank difference above one");
  const int r = std::max(ra, rb);
  Shape ea(r, 1), eb(r, 1);
  if (na == 1 && ra != r) {
  } else {
    for (int i = 0; i < ra; ++i) ea[r - ra + i] = a[i];
  }
  if (nb == 1 && rb != r) {
  } else {
    for (int i = 0; i < rb; ++i) eb[r - rb + i] = b[i];
  }
  m.out.resize(r);
  for (int i = 0; i < r; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1)
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    m.out[i] = std::max(ea[i], eb[i]);
  }
  std::vector<std::size_t> sa(r), sb(r);
  std::size_t accA = 1, accB = 1;
  for (int i = r - 1; i >= 0; --i) {
    sa[i] = ea[i] == 1 ? 0 : accA;
    sb[i] = eb[i] == 1 ? 0 : accB;
    accA *= ea[i];
    accB *= eb[i];
  }
  const std::size_t n = numel(m.out);
  m.ia.resize(n);
  m.ib.resize(n);
  std::vector<int> idx(r, 0);
  std::size_t offA = 0, offB = 0;
  for (std::size_t k = 0; k < n; ++k) {
    m.ia[k] = offA;
    m.ib[k] = offB;
    for (int d = r - 1; d >= 0; --d) {
      if (++idx[d] < m.out[d]) {
        offA += sa[d];
        offB += sb[d];
        break;
      }
      offA -= sa[d] * (m.out[d] - 1);
      offB -= sb[d] * (m.out[d] - 1);
      idx[d] = 0;
    }
  }
  return m;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(const Tensor<T>& x, const char* name, Fwd fwd, Bwd dfdx) {
  auto out = make_result<T>(x.shape(), name, {&x});
  const auto& xv = x.node().value;
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = fwd(xv[i]);
  check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [dfdx](Node<T>& n) {
      T* gx = parent_grad(n, 0);
      if (!gx) return;
      const auto& xv = n.parents[0]->value;
      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += n.grad[i] * dfdx(xv[i], n.value[i]);
    };
  }
  return Tensor<T>(out);
}

}  // namespace detail

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, ElementwiseOp op) {
  auto map = std::make_shared<detail::BroadcastMap>(detail::broadcast(a.shape(), b.shape()));
  static constexpr const char* names[] = {"add", "sub", "mul", "div", "minimum"};
  auto out = detail::make_result<T>(map->out, names[static_cast<int>(op)], {&a, &b});
  const auto& av = a.node().value;
  const auto& bv = b.node().value;
  const std::size_t n = out->value.size();
  auto ia = [&](std::size_t k) { return map->trivial ? k : map->ia[k]; };
  auto ib = [&](std::size_t k) { return map->trivial ? k : map->ib[k]; };
  for (std::size_t k = 0; k < n; ++k) {
    const T x = av[ia(k)], y = bv[ib(k)];
    switch (op) {
      case ElementwiseOp::add: out->value[k] = x + y; break;
      case ElementwiseOp::sub: out->value[k] = x - y; break;
      case ElementwiseOp::mul: out->value[k] = x * y; break;
      case ElementwiseOp::div:
        if (y == T(0)) throw NumericsError("division by zero");
        out->value[k] = x / y;
        break;
      case ElementwiseOp::minimum: out->value[k] = y < x ? y : x; break;
    }
  }
  detail::check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [map, op](Node<T>& nd) {
      T* ga = detail::parent_grad(nd, 0);
      T* gb = detail::parent_grad(nd, 1);
      const auto& av = nd.parents[0]->value;
      const auto& bv = nd.parents[1]->value;
      const std::size_t n = nd.value.size();
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = map->trivial ? k : map->ia[k];
        const std::size_t j = map->trivial ? k : map->ib[k];
        const T g = nd.grad[k];
        switch (op) {
          case ElementwiseOp::add:
            if (ga) ga[i] += g;
            if (gb) gb[j] += g;
            break;
          case ElementwiseOp::sub:
            if (ga) ga[i] += g;
            if (gb) gb[j] -= g;
            break;
          case ElementwiseOp::mul:
            if (ga) ga[i] += g * bv[j];
            if (gb) gb[j] += g * av[i];
            break;
          case ElementwiseOp::div:
            if (ga) ga[i] += g / bv[j];
            if (gb) gb[j] -= g * av[i] / (bv[j] * bv[j]);
            break;
          case ElementwiseOp::minimum:
            if (bv[j] < av[i]) {
              if (gb) gb[j] += g;
            } else if (ga) {
              ga[i] += g;
            }
            break;
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::add); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::sub); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::mul); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::div); }
template <typename T> Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, ElementwiseOp::minimum); }

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, "add_scalar", [s](T v) { return v + s; }, [](T, T) { return T(1); });
}
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, "mul_scalar", [s](T v) { return v * s; }, [s](T, T) { return s; });
}
template <typename T> Tensor<T> operator*(const Tensor<T>& x, T s) { return mul_scalar(x, s); }
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& x) { return mul_scalar(x, s); }
template <typename T> Tensor<T> operator+(const Tensor<T>& x, T s) { return add_scalar(x, s); }
template <typename T> Tensor<T> operator-(const Tensor<T>& x) { return mul_scalar(x, T(-1)); }

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, "sigmoid",
      [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
      [](T, T y) { return y * (T(1) - y); });
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, "relu", [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary(
      x, "softplus", [](T v) { return std::log1p(std::exp(-std::abs(v))) + std::max(v, T(0)); },
      [](T v, T) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  switch (kind) {
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
    case Activation::softplus: return softplus(x);
  }
  return x;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(x, "abs", [](T v) { return std::abs(v); },
                       [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}
template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}
template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(
      x, "log",
      [](T v) {
        if (v <= T(0)) throw NumericsError("log of non-positive value");
        return std::log(v);
      },
      [](T v, T) { return T(1) / v; });
}
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary(
      x, "sqrt",
      [](T v) {
        if (v < T(0)) throw NumericsError("sqrt of negative value");
        return std::sqrt(v);
      },
      [](T, T y) { return T(0.5) / y; });
}
template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// Reduction over the listed axes, keeping them as extent 1. An empty axis
/// list reduces everything to shape [1].
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, ReduceOp op, std::vector<int> axes = {}) {
  const Shape& in = x.shape();
  const int r = x.rank();
  std::vector<bool> red(r, axes.empty());
  for (int a : axes) {
    if (a < 0) a += r;
    if (a < 0 || a >= r) throw DimensionError("reduce axis out of range for " + shape_str(in));
    red[a] = true;
  }
  Shape out_shape(r);
  std::size_t count = 1;
  for (int i = 0; i < r; ++i) {
    out_shape[i] = red[i] ? 1 : in[i];
    if (red[i]) count *= in[i];
  }
  if (axes.empty()) out_shape = {1};
  // Output index for each input element.
  auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
  {
    std::vector<std::size_t> so(r);
    std::size_t acc = 1;
    for (int i = r - 1; i >= 0; --i) {
      so[i] = red[i] ? 0 : acc;
      acc *= red[i] ? 1 : in[i];
    }
    std::vector<int> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t k = 0; k < x.numel(); ++k) {
      (*map)[k] = off;
      for (int d = r - 1; d >= 0; --d) {
        if (++idx[d] < in[d]) {
          off += so[d];
          break;
        }
        off -= so[d] * (in[d] - 1);
        idx[d] = 0;
      }
    }
  }
  auto out = detail::make_result<T>(out_shape, op == ReduceOp::sum ? "sum" : "mean", {&x});
  const T scale = op == ReduceOp::mean ? T(1) / static_cast<T>(count) : T(1);
  const auto& xv = x.node().value;
  for (std::size_t k = 0; k < xv.size(); ++k) out->value[(*map)[k]] += xv[k];
  if (scale != T(1))
    for (auto& v : out->value) v *= scale;
  detail::check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [map, scale](Node<T>& n) {
      T* gx = detail::parent_grad(n, 0);
      if (!gx) return;
      for (std::size_t k = 0; k < map->size(); ++k) gx[k] += n.grad[(*map)[k]] * scale;
    };
  }
  return Tensor<T>(out);
}

template <typename T> Tensor<T> sum(const Tensor<T>& x) { return reduce(x, ReduceOp::sum); }
template <typename T> Tensor<T> mean(const Tensor<T>& x) { return reduce(x, ReduceOp::mean); }

/// Mean over spatial extents of a CxHxW map, returning shape [C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 3) throw DimensionError("global_avg_pool expects CxHxW, got " + shape_str(x.shape()));
  const int c = x.dim(0);
  const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  auto out = detail::make_result<T>({c}, "global_avg_pool", {&x});
  const auto& xv = x.node().value;
  for (int ch = 0; ch < c; ++ch) {
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += xv[ch * hw + i];
    out->value[ch] = s / static_cast<T>(hw);
  }
  detail::check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [c, hw](Node<T>& n) {
      T* gx = detail::parent_grad(n, 0);
      if (!gx) return;
      const T inv = T(1) / static_cast<T>(hw);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] += n.grad[ch] * inv;
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto out = detail::make_result<T>(shape, "reshape", {&x});
  out->value = x.node().value;
  if (out->requires_grad) {
    out->backward_fn = [](Node<T>& n) {
      T* gx = detail::parent_grad(n, 0);
      if (!gx) return;
      for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
    };
  }
  return Tensor<T>(out);
}

/// Broadcasts `x` to `shape` under the elementwise broadcasting rule.
template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
  auto map = std::make_shared<detail::BroadcastMap>(detail::broadcast(x.shape(), shape));
  if (map->out != shape)
    throw DimensionError("cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto out = detail::make_result<T>(shape, "expand", {&x});
  const auto& xv = x.node().value;
  for (std::size_t k = 0; k < out->value.size(); ++k) out->value[k] = xv[map->trivial ? k : map->ia[k]];
  if (out->requires_grad) {
    out->backward_fn = [map](Node<T>& n) {
      T* gx = detail::parent_grad(n, 0);
      if (!gx) return;
      for (std::size_t k = 0; k < n.grad.size(); ++k) gx[map->trivial ? k : map->ia[k]] += n.grad[k];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of an empty list");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("concat axis out of range");
  Shape shape = parts[0].shape();
  shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.dim(i) != parts[0].dim(i))
        throw DimensionError("concat extent mismatch: " + shape_str(p.shape()) + " vs " +
                             shape_str(parts[0].shape()));
    shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= shape[i];
  auto out = detail::make_result<T>(shape, "concat", parts);
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(static_cast<std::size_t>(p.dim(axis)) * inner);
  const std::size_t row = static_cast<std::size_t>(shape[axis]) * inner;
  std::size_t off = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const auto& pv = parts[j].node().value;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * widths[j], widths[j], out->value.begin() + o * row + off);
    off += widths[j];
  }
  if (out->requires_grad) {
    out->backward_fn = [widths, outer, row](Node<T>& n) {
      std::size_t off = 0;
      for (std::size_t j = 0; j < n.parents.size(); ++j) {
        if (T* g = detail::parent_grad(n, j))
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < widths[j]; ++i) g[o * widths[j] + i] += n.grad[o * row + off + i];
        off += widths[j];
      }
    };
  }
  return Tensor<T>(out);
}

/// Sub-range [start, start+length) along one axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int length) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r || start < 0 || length < 1 || start + length > x.dim(axis))
    throw DimensionError("slice out of range on " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= shape[i];
  const std::size_t src_row = static_cast<std::size_t>(x.dim(axis)) * inner;
  const std::size_t dst_row = static_cast<std::size_t>(length) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  auto out = detail::make_result<T>(shape, "slice", {&x});
  const auto& xv = x.node().value;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.begin() + o * src_row + off, dst_row, out->value.begin() + o * dst_row);
  if (out->requires_grad) {
    out->backward_fn = [outer, src_row, dst_row, off](Node<T>& n) {
      T* gx = detail::parent_grad(n, 0);
      if (!gx) return;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < dst_row; ++i) gx[o * src_row + off + i] += n.grad[o * dst_row + i];
    };
  }
  return Tensor<T>(out);
}

}  // namespace dro
