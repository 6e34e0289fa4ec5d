// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Differentiable free functions over Tensor: matrix product, broadcasting
// element-wise arithmetic, axis reductions and layout changes.
//
// Broadcasting follows one rule only: shapes are aligned at their trailing
// axis and an extent of 1 stretches to match the other operand.

#ifndef UTTENC_OPS_HPP_
#define UTTENC_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "uttenc/tensor.hpp"

namespace uttenc {
namespace detail {

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const Index db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      throw DimensionError("cannot broadcast " + to_string(a) + " with " +
                           to_string(b));
    }
  }
  return out;
}

// Strides of `in` in the index space of `out`; zero on stretched axes.
inline std::vector<Index> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<Index> s(out.size(), 0);
  const std::size_t off = out.size() - in.size();
  Index stride = 1;
  for (std::size_t k = in.size(); k-- > 0;) {
    s[k + off] = in[k] == 1 ? 0 : stride;
    stride *= in[k];
  }
  return s;
}

// Calls f(out_index, a_index, b_index) for every element of `out`.
template <typename F>
void broadcast_loop(const Shape& out, const std::vector<Index>& sa,
                    const std::vector<Index>& sb, F&& f) {
  const Index n = numel(out);
  if (n == 0) return;
  const std::size_t r = out.size();
  if (r == 0) {
    f(Index{0}, Index{0}, Index{0});
    return;
  }
  const Index inner = out[r - 1];
  const Index step_a = sa[r - 1], step_b = sb[r - 1];
  std::vector<Index> idx(r, 0);
  Index ia = 0, ib = 0;
  for (Index o = 0; o < n; o += inner) {
    for (Index j = 0; j < inner; ++j) f(o + j, ia + j * step_a, ib + j * step_b);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// f(x, y) -> value; dfa / dfb are the partials at (x, y).
template <typename Scalar, typename F, typename DA, typename DB>
Tensor<Scalar> binary_op(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                         F f, DA dfa, DB dfb) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.shape() == b.shape()) {
    ArrayX<Scalar> out(av.size());
    for (Index i = 0; i < av.size(); ++i) out(i) = f(av(i), bv(i));
    auto na = a.node(), nb = b.node();
    return make_op<Scalar>(a.shape(), std::move(out), {a, b},
                           [na, nb, dfa, dfb](Node<Scalar>& self) {
                             const auto& g = self.grad;
                             const auto& x = na->value;
                             const auto& y = nb->value;
                             if (na->requires_grad) {
                               ArrayX<Scalar> ga(g.size());
                               for (Index i = 0; i < g.size(); ++i)
                                 ga(i) = g(i) * dfa(x(i), y(i));
                               na->accumulate(ga);
                             }
                             if (nb->requires_grad) {
                               ArrayX<Scalar> gb(g.size());
                               for (Index i = 0; i < g.size(); ++i)
                                 gb(i) = g(i) * dfb(x(i), y(i));
                               nb->accumulate(gb);
                             }
                           });
  }
  Shape shape = broadcast_shapes(a.shape(), b.shape());
  auto sa = broadcast_strides(a.shape(), shape);
  auto sb = broadcast_strides(b.shape(), shape);
  ArrayX<Scalar> out(numel(shape));
  broadcast_loop(shape, sa, sb, [&](Index o, Index i, Index j) {
    out(o) = f(av(i), bv(j));
  });
  auto na = a.node(), nb = b.node();
  Shape oshape = shape;
  return make_op<Scalar>(
      std::move(shape), std::move(out), {a, b},
      [na, nb, dfa, dfb, oshape, sa, sb](Node<Scalar>& self) {
        const auto& g = self.grad;
        const auto& x = na->value;
        const auto& y = nb->value;
        if (na->requires_grad) {
          ArrayX<Scalar> ga = ArrayX<Scalar>::Zero(x.size());
          broadcast_loop(oshape, sa, sb, [&](Index o, Index i, Index j) {
            ga(i) += g(o) * dfa(x(i), y(j));
          });
          na->accumulate(ga);
        }
        if (nb->requires_grad) {
          ArrayX<Scalar> gb = ArrayX<Scalar>::Zero(y.size());
          broadcast_loop(oshape, sa, sb, [&](Index o, Index i, Index j) {
            gb(j) += g(o) * dfb(x(i), y(j));
          });
          nb->accumulate(gb);
        }
      });
}

// f(x) -> y; df(x, y) is the derivative.
template <typename Scalar, typename F, typename DF>
Tensor<Scalar> unary_op(const Tensor<Scalar>& a, F f, DF df) {
  const auto& av = a.value();
  ArrayX<Scalar> out(av.size());
  for (Index i = 0; i < av.size(); ++i) out(i) = f(av(i));
  auto na = a.node();
  return make_op<Scalar>(a.shape(), std::move(out), {a},
                         [na, df](Node<Scalar>& self) {
                           const auto& g = self.grad;
                           ArrayX<Scalar> ga(g.size());
                           for (Index i = 0; i < g.size(); ++i)
                             ga(i) = g(i) * df(na->value(i), self.value(i));
                           na->accumulate(ga);
                         });
}

struct AxisView {
  Index outer, extent, inner;
};

inline int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return a;
}

inline AxisView axis_view(const Shape& shape, int axis) {
  AxisView v{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
    v.inner *= shape[i];
  return v;
}

inline Shape reduced_shape(const Shape& shape, int axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else {
    out.erase(out.begin() + axis);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix product

/// C = A * B for rank-2 operands.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) +
                         " * " + to_string(b.shape()));
  }
  const Index m = a.dim(0), n = b.dim(1);
  ArrayX<Scalar> out(m * n);
  Eigen::Map<RowMatrix<Scalar>>(out.data(), m, n).noalias() =
      a.matrix() * b.matrix();
  auto na = a.node(), nb = b.node();
  return detail::make_op<Scalar>(
      {m, n}, std::move(out), {a, b}, [na, nb, m, n](detail::Node<Scalar>& self) {
        Eigen::Map<const RowMatrix<Scalar>> g(self.grad.data(), m, n);
        const Index k = na->shape[1];
        Eigen::Map<const RowMatrix<Scalar>> av(na->value.data(), m, k);
        Eigen::Map<const RowMatrix<Scalar>> bv(nb->value.data(), k, n);
        if (na->requires_grad) {
          na->ensure_grad();
          Eigen::Map<RowMatrix<Scalar>>(na->grad.data(), m, k).noalias() +=
              g * bv.transpose();
          na->touched = true;
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          Eigen::Map<RowMatrix<Scalar>>(nb->grad.data(), k, n).noalias() +=
              av.transpose() * g;
          nb->touched = true;
        }
      });
}

// ---------------------------------------------------------------------------
// Element-wise

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary_op(
      a, b, [](Scalar x, Scalar y) { return x + y; },
      [](Scalar, Scalar) { return Scalar(1); },
      [](Scalar, Scalar) { return Scalar(1); });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary_op(
      a, b, [](Scalar x, Scalar y) { return x - y; },
      [](Scalar, Scalar) { return Scalar(1); },
      [](Scalar, Scalar) { return Scalar(-1); });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary_op(
      a, b, [](Scalar x, Scalar y) { return x * y; },
      [](Scalar, Scalar y) { return y; }, [](Scalar x, Scalar) { return x; });
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::binary_op(
      a, b, [](Scalar x, Scalar y) { return x / y; },
      [](Scalar, Scalar y) { return Scalar(1) / y; },
      [](Scalar x, Scalar y) { return -x / (y * y); });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  return detail::unary_op(
      a, [](Scalar x) { return std::tanh(x); },
      [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  return detail::unary_op(
      a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  return detail::unary_op(
      a, [](Scalar x) { return std::log(x); },
      [](Scalar x, Scalar) { return Scalar(1) / x; });
}

/// max(x, 0); the subgradient at 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  return detail::unary_op(
      a, [](Scalar x) { return x > Scalar(0) ? x : Scalar(0); },
      [](Scalar x, Scalar) { return x > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  return detail::unary_op(
      a, [](Scalar x) { return x * x; },
      [](Scalar x, Scalar) { return Scalar(2) * x; });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  return detail::unary_op(
      a, [s](Scalar x) { return s * x; }, [s](Scalar, Scalar) { return s; });
}

template <typename Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& a) {
  return scale(a, Scalar(-1));
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return sub(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return mul(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return div(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) {
  return scale(a, s);
}

// ---------------------------------------------------------------------------
// Reductions

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a, int axis, bool keepdim = false) {
  axis = detail::normalize_axis(axis, a.rank());
  const auto v = detail::axis_view(a.shape(), axis);
  const auto& x = a.value();
  ArrayX<Scalar> out = ArrayX<Scalar>::Zero(v.outer * v.inner);
  for (Index o = 0; o < v.outer; ++o)
    for (Index k = 0; k < v.extent; ++k)
      out.segment(o * v.inner, v.inner) +=
          x.segment((o * v.extent + k) * v.inner, v.inner);
  auto na = a.node();
  return detail::make_op<Scalar>(
      detail::reduced_shape(a.shape(), axis, keepdim), std::move(out), {a},
      [na, v](detail::Node<Scalar>& self) {
        ArrayX<Scalar> ga(na->value.size());
        for (Index o = 0; o < v.outer; ++o)
          for (Index k = 0; k < v.extent; ++k)
            ga.segment((o * v.extent + k) * v.inner, v.inner) =
                self.grad.segment(o * v.inner, v.inner);
        na->accumulate(ga);
      });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a, int axis, bool keepdim = false) {
  axis = detail::normalize_axis(axis, a.rank());
  const Index n = a.dim(axis);
  if (n == 0) throw EmptyInputError("mean over an empty axis");
  return scale(sum(a, axis, keepdim), Scalar(1) / static_cast<Scalar>(n));
}

/// Maximum along `axis`; ties go to the first index.
template <typename Scalar>
Tensor<Scalar> max(const Tensor<Scalar>& a, int axis, bool keepdim = false) {
  axis = detail::normalize_axis(axis, a.rank());
  const auto v = detail::axis_view(a.shape(), axis);
  if (v.extent == 0) throw EmptyInputError("max over an empty axis");
  const auto& x = a.value();
  ArrayX<Scalar> out(v.outer * v.inner);
  std::vector<Index> arg(static_cast<std::size_t>(out.size()));
  for (Index o = 0; o < v.outer; ++o) {
    for (Index i = 0; i < v.inner; ++i) {
      Index best = o * v.extent * v.inner + i;
      for (Index k = 1; k < v.extent; ++k) {
        const Index at = (o * v.extent + k) * v.inner + i;
        if (x(at) > x(best)) best = at;
      }
      out(o * v.inner + i) = x(best);
      arg[static_cast<std::size_t>(o * v.inner + i)] = best;
    }
  }
  auto na = a.node();
  return detail::make_op<Scalar>(
      detail::reduced_shape(a.shape(), axis, keepdim), std::move(out), {a},
      [na, arg](detail::Node<Scalar>& self) {
        ArrayX<Scalar> ga = ArrayX<Scalar>::Zero(na->value.size());
        for (std::size_t j = 0; j < arg.size(); ++j)
          ga(arg[j]) += self.grad(static_cast<Index>(j));
        na->accumulate(ga);
      });
}

/// Softmax along `axis`, computed after subtracting the axis maximum.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a, int axis) {
  axis = detail::normalize_axis(axis, a.rank());
  const auto v = detail::axis_view(a.shape(), axis);
  const auto& x = a.value();
  ArrayX<Scalar> y(x.size());
  for (Index o = 0; o < v.outer; ++o) {
    for (Index i = 0; i < v.inner; ++i) {
      const Index base = o * v.extent * v.inner + i;
      Scalar hi = -std::numeric_limits<Scalar>::infinity();
      for (Index k = 0; k < v.extent; ++k) hi = std::max(hi, x(base + k * v.inner));
      Scalar total = 0;
      for (Index k = 0; k < v.extent; ++k) {
        const Scalar e = std::exp(x(base + k * v.inner) - hi);
        y(base + k * v.inner) = e;
        total += e;
      }
      for (Index k = 0; k < v.extent; ++k) y(base + k * v.inner) /= total;
    }
  }
  auto na = a.node();
  return detail::make_op<Scalar>(
      a.shape(), std::move(y), {a}, [na, v](detail::Node<Scalar>& self) {
        const auto& g = self.grad;
        const auto& p = self.value;
        ArrayX<Scalar> ga(p.size());
        for (Index o = 0; o < v.outer; ++o) {
          for (Index i = 0; i < v.inner; ++i) {
            const Index base = o * v.extent * v.inner + i;
            Scalar dot = 0;
            for (Index k = 0; k < v.extent; ++k)
              dot += g(base + k * v.inner) * p(base + k * v.inner);
            for (Index k = 0; k < v.extent; ++k) {
              const Index at = base + k * v.inner;
              ga(at) = p(at) * (g(at) - dot);
            }
          }
        }
        na->accumulate(ga);
      });
}

template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& a, int axis) {
  axis = detail::normalize_axis(axis, a.rank());
  const auto v = detail::axis_view(a.shape(), axis);
  const auto& x = a.value();
  ArrayX<Scalar> y(x.size());
  for (Index o = 0; o < v.outer; ++o) {
    for (Index i = 0; i < v.inner; ++i) {
      const Index base = o * v.extent * v.inner + i;
      Scalar hi = -std::numeric_limits<Scalar>::infinity();
      for (Index k = 0; k < v.extent; ++k) hi = std::max(hi, x(base + k * v.inner));
      Scalar total = 0;
      for (Index k = 0; k < v.extent; ++k) total += std::exp(x(base + k * v.inner) - hi);
      const Scalar lse = hi + std::log(total);
      for (Index k = 0; k < v.extent; ++k)
        y(base + k * v.inner) = x(base + k * v.inner) - lse;
    }
  }
  auto na = a.node();
  return detail::make_op<Scalar>(
      a.shape(), std::move(y), {a}, [na, v](detail::Node<Scalar>& self) {
        const auto& g = self.grad;
        const auto& ly = self.value;
        ArrayX<Scalar> ga(ly.size());
        for (Index o = 0; o < v.outer; ++o) {
          for (Index i = 0; i < v.inner; ++i) {
            const Index base = o * v.extent * v.inner + i;
            Scalar gsum = 0;
            for (Index k = 0; k < v.extent; ++k) gsum += g(base + k * v.inner);
            for (Index k = 0; k < v.extent; ++k) {
              const Index at = base + k * v.inner;
              ga(at) = g(at) - std::exp(ly(at)) * gsum;
            }
          }
        }
        na->accumulate(ga);
      });
}

/// Euclidean norm along `axis`. The gradient at a zero vector is zero.
template <typename Scalar>
Tensor<Scalar> l2norm(const Tensor<Scalar>& a, int axis, bool keepdim = false) {
  axis = detail::normalize_axis(axis, a.rank());
  const auto v = detail::axis_view(a.shape(), axis);
  const auto& x = a.value();
  ArrayX<Scalar> out = ArrayX<Scalar>::Zero(v.outer * v.inner);
  for (Index o = 0; o < v.outer; ++o)
    for (Index k = 0; k < v.extent; ++k)
      out.segment(o * v.inner, v.inner) +=
          x.segment((o * v.extent + k) * v.inner, v.inner).square();
  out = out.sqrt();
  auto na = a.node();
  return detail::make_op<Scalar>(
      detail::reduced_shape(a.shape(), axis, keepdim), std::move(out), {a},
      [na, v](detail::Node<Scalar>& self) {
        ArrayX<Scalar> ga(na->value.size());
        for (Index o = 0; o < v.outer; ++o) {
          for (Index k = 0; k < v.extent; ++k) {
            for (Index i = 0; i < v.inner; ++i) {
              const Index at = (o * v.extent + k) * v.inner + i;
              const Scalar n = self.value(o * v.inner + i);
              ga(at) = n > Scalar(0)
                           ? self.grad(o * v.inner + i) * na->value(at) / n
                           : Scalar(0);
            }
          }
        }
        na->accumulate(ga);
      });
}

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& a) {
  auto na = a.node();
  return detail::make_op<Scalar>(
      Shape{}, ArrayX<Scalar>::Constant(1, a.value().sum()), {a},
      [na](detail::Node<Scalar>& self) {
        na->accumulate(ArrayX<Scalar>::Constant(na->value.size(), self.grad(0)));
      });
}

template <typename Scalar>
Tensor<Scalar> mean_all(const Tensor<Scalar>& a) {
  if (a.size() == 0) throw EmptyInputError("mean of an empty tensor");
  return scale(sum_all(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

// ---------------------------------------------------------------------------
// Layout

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("cannot reshape " + to_string(a.shape()) + " to " +
                         to_string(shape));
  }
  auto na = a.node();
  return detail::make_op<Scalar>(std::move(shape), a.value(), {a},
                                 [na](detail::Node<Scalar>& self) {
                                   na->accumulate(self.grad);
                                 });
}

/// Reorders axes: output axis i is input axis perm[i].
template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw DimensionError("permutation rank does not match " +
                         to_string(a.shape()));
  }
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  Shape shape(static_cast<std::size_t>(r));
  std::vector<Index> in_strides(static_cast<std::size_t>(r));
  Index stride = 1;
  for (int k = r - 1; k >= 0; --k) {
    in_strides[static_cast<std::size_t>(k)] = stride;
    stride *= a.dim(k);
  }
  std::vector<Index> gather_strides(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<std::size_t>(i)];
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) {
      throw DimensionError("invalid permutation for " + to_string(a.shape()));
    }
    seen[static_cast<std::size_t>(p)] = true;
    shape[static_cast<std::size_t>(i)] = a.dim(p);
    gather_strides[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(p)];
  }
  // source[j] holds the input flat index feeding output j
  std::vector<Index> source(static_cast<std::size_t>(a.size()));
  std::vector<Index> zero(static_cast<std::size_t>(r), 0);
  detail::broadcast_loop(shape, gather_strides, zero,
                         [&](Index o, Index i, Index) {
                           source[static_cast<std::size_t>(o)] = i;
                         });
  ArrayX<Scalar> out(a.size());
  for (Index o = 0; o < a.size(); ++o)
    out(o) = a.value()(source[static_cast<std::size_t>(o)]);
  auto na = a.node();
  return detail::make_op<Scalar>(
      std::move(shape), std::move(out), {a},
      [na, source = std::move(source)](detail::Node<Scalar>& self) {
        ArrayX<Scalar> ga(na->value.size());
        for (std::size_t o = 0; o < source.size(); ++o)
          ga(source[o]) = self.grad(static_cast<Index>(o));
        na->accumulate(ga);
      });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose needs rank 2, got " + to_string(a.shape()));
  }
  return permute(a, {1, 0});
}

/// For a rank-2 M x C input returns the M values a[i, labels[i]].
template <typename Scalar>
Tensor<Scalar> pick(const Tensor<Scalar>& a, std::span<const int> labels) {
  if (a.rank() != 2 || a.dim(0) != static_cast<Index>(labels.size())) {
    throw DimensionError("pick: " + std::to_string(labels.size()) +
                         " labels for tensor " + to_string(a.shape()));
  }
  const Index m = a.dim(0), c = a.dim(1);
  std::vector<Index> at(labels.size());
  ArrayX<Scalar> out(m);
  for (Index i = 0; i < m; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      throw std::out_of_range("label " + std::to_string(y) +
                              " outside [0, " + std::to_string(c) + ")");
    }
    at[static_cast<std::size_t>(i)] = i * c + y;
    out(i) = a.value()(i * c + y);
  }
  auto na = a.node();
  return detail::make_op<Scalar>(
      {m}, std::move(out), {a}, [na, at](detail::Node<Scalar>& self) {
        ArrayX<Scalar> ga = ArrayX<Scalar>::Zero(na->value.size());
        for (std::size_t i = 0; i < at.size(); ++i)
          ga(at[i]) += self.grad(static_cast<Index>(i));
        na->accumulate(ga);
      });
}

}  // namespace uttenc

#endif  // UTTENC_OPS_HPP_
