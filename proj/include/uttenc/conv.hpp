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

#ifndef UTTENC_CONV_HPP_
#define UTTENC_CONV_HPP_

#include <cmath>
#include <string>

#include "uttenc/ops.hpp"

namespace uttenc {

struct Conv2dGeometry {
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;

  Index output_extent(Index in) const {
    return (in + 2 * padding - kernel) / stride + 1;
  }
};

namespace detail {

// Output columns [lo, hi) whose input column ow * stride - padding + kj
// falls inside [0, w).
inline std::pair<Index, Index> valid_range(Index kj, Index w, Index wo, const Conv2dGeometry& g) {
  const Index shift = g.padding - kj;
  Index lo = shift > 0 ? (shift + g.stride - 1) / g.stride : 0;
  Index hi = (w - 1 + shift) >= 0 ? (w - 1 + shift) / g.stride + 1 : 0;
  lo = std::min(lo, wo);
  hi = std::clamp(hi, lo, wo);
  return {lo, hi};
}

// Unfolds one C x H x W image into a (C*k*k) x (Ho*Wo) row-major matrix.
template <typename Scalar>
void im2col(const Scalar* img, Index channels, Index h, Index w,
            const Conv2dGeometry& g, Index ho, Index wo, Scalar* cols) {
  const Index k = g.kernel, s = g.stride;
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        Scalar* row = cols + ((c * k + ki) * k + kj) * ho * wo;
        const auto [lo, hi] = valid_range(kj, w, wo, g);
        const Index offset = kj - g.padding;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * s - g.padding + ki;
          Scalar* dst = row + oh * wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, Scalar(0));
            continue;
          }
          const Scalar* src = img + (c * h + ih) * w + offset;
          std::fill(dst, dst + lo, Scalar(0));
          if (s == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (Index ow = lo; ow < hi; ++ow) dst[ow] = src[ow * s];
          }
          std::fill(dst + hi, dst + wo, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* cols, Index channels, Index h, Index w,
                const Conv2dGeometry& g, Index ho, Index wo, Scalar* img) {
  const Index k = g.kernel, s = g.stride;
  for (Index c = 0; c < channels; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Scalar* row = cols + ((c * k + ki) * k + kj) * ho * wo;
        const auto [lo, hi] = valid_range(kj, w, wo, g);
        const Index offset = kj - g.padding;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * s - g.padding + ki;
          if (ih < 0 || ih >= h) continue;
          Scalar* dst = img + (c * h + ih) * w + offset;
          const Scalar* src = row + oh * wo;
          for (Index ow = lo; ow < hi; ++ow) dst[ow * s] += src[ow];
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation of an N x C x H x W batch with an O x C x k x k
/// kernel bank (no bias). Output is N x O x H' x W' with
/// H' = floor((H + 2p - k) / s) + 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      Conv2dGeometry geom) {
  if (input.rank() != 4 || weight.rank() != 4 || weight.dim(1) != input.dim(1) ||
      weight.dim(2) != geom.kernel || weight.dim(3) != geom.kernel) {
    throw DimensionError("conv2d: input " + to_string(input.shape()) +
                         " incompatible with kernel " + to_string(weight.shape()));
  }
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2),
              w = input.dim(3), o = weight.dim(0);
  if (h + 2 * geom.padding < geom.kernel || w + 2 * geom.padding < geom.kernel) {
    throw DimensionError("conv2d: kernel " + std::to_string(geom.kernel) +
                         " larger than padded input " + to_string(input.shape()));
  }
  const Index ho = geom.output_extent(h), wo = geom.output_extent(w);
  const Index patch = c * geom.kernel * geom.kernel;
  const Index plane = ho * wo;

  Eigen::Map<const RowMatrix<Scalar>> wmat(weight.value().data(), o, patch);
  ArrayX<Scalar> out(n * o * plane);
  RowMatrix<Scalar> cols(patch, plane);
  for (Index i = 0; i < n; ++i) {
    detail::im2col(input.value().data() + i * c * h * w, c, h, w, geom, ho, wo,
                   cols.data());
    Eigen::Map<RowMatrix<Scalar>>(out.data() + i * o * plane, o, plane).noalias() =
        wmat * cols;
  }

  auto nx = input.node(), nw = weight.node();
  return detail::make_op<Scalar>(
      {n, o, ho, wo}, std::move(out), {input, weight},
      [nx, nw, geom, n, c, h, w, o, ho, wo, patch, plane](detail::Node<Scalar>& self) {
        Eigen::Map<const RowMatrix<Scalar>> wm(nw->value.data(), o, patch);
        RowMatrix<Scalar> cols(patch, plane);
        RowMatrix<Scalar> dcols(patch, plane);
        RowMatrix<Scalar> dw = RowMatrix<Scalar>::Zero(o, patch);
        if (nx->requires_grad) nx->ensure_grad();
        for (Index i = 0; i < n; ++i) {
          Eigen::Map<const RowMatrix<Scalar>> g(self.grad.data() + i * o * plane, o,
                                                plane);
          if (nw->requires_grad) {
            detail::im2col(nx->value.data() + i * c * h * w, c, h, w, geom, ho, wo,
                           cols.data());
            dw.noalias() += g * cols.transpose();
          }
          if (nx->requires_grad) {
            dcols.noalias() = wm.transpose() * g;
            detail::col2im_add(dcols.data(), c, h, w, geom, ho, wo,
                               nx->grad.data() + i * c * h * w);
          }
        }
        if (nx->requires_grad) nx->touched = true;
        if (nw->requires_grad)
          nw->accumulate(Eigen::Map<const ArrayX<Scalar>>(dw.data(), dw.size()));
      });
}

/// Running statistics of a batch-norm layer.
template <typename Scalar>
struct BatchNormState {
  ArrayX<Scalar> running_mean;
  ArrayX<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);

  explicit BatchNormState(Index channels = 0)
      : running_mean(ArrayX<Scalar>::Zero(channels)),
        running_var(ArrayX<Scalar>::Ones(channels)) {}
};

enum class NormMode { kTrain, kEval };

/// Per-channel batch normalisation of an N x C (x H x W) tensor.
///
/// Train mode normalises with the biased batch variance over N*H*W and
/// folds (mean, unbiased variance) into the running statistics; eval mode
/// uses the running statistics only.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormState<Scalar>& state,
                          NormMode mode) {
  if (input.rank() < 2 || gamma.size() != input.dim(1) ||
      beta.size() != input.dim(1) || state.running_mean.size() != input.dim(1)) {
    throw DimensionError("batch_norm: input " + to_string(input.shape()) +
                         " with " + std::to_string(gamma.size()) + " channels");
  }
  const Index n = input.dim(0), c = input.dim(1);
  const Index spatial = input.size() / (n * c);
  const Index count = n * spatial;
  const auto& x = input.value();

  ArrayX<Scalar> mean(c), inv_std(c);
  if (mode == NormMode::kTrain) {
    if (n < 2) {
      throw std::invalid_argument("batch_norm: train mode needs a batch of at least 2");
    }
    for (Index ch = 0; ch < c; ++ch) {
      Scalar s = 0;
      for (Index i = 0; i < n; ++i)
        s += x.segment((i * c + ch) * spatial, spatial).sum();
      const Scalar mu = s / static_cast<Scalar>(count);
      Scalar ss = 0;
      for (Index i = 0; i < n; ++i)
        ss += (x.segment((i * c + ch) * spatial, spatial) - mu).square().sum();
      const Scalar var = ss / static_cast<Scalar>(count);
      mean(ch) = mu;
      inv_std(ch) = Scalar(1) / std::sqrt(var + state.eps);
      const Scalar unbiased = count > 1 ? ss / static_cast<Scalar>(count - 1) : var;
      state.running_mean(ch) =
          (Scalar(1) - state.momentum) * state.running_mean(ch) + state.momentum * mu;
      state.running_var(ch) =
          (Scalar(1) - state.momentum) * state.running_var(ch) +
          state.momentum * unbiased;
    }
  } else {
    mean = state.running_mean;
    inv_std = (state.running_var + state.eps).sqrt().inverse();
  }

  ArrayX<Scalar> xhat(x.size());
  ArrayX<Scalar> out(x.size());
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * spatial;
      xhat.segment(off, spatial) = (x.segment(off, spatial) - mean(ch)) * inv_std(ch);
      out.segment(off, spatial) =
          gamma.value()(ch) * xhat.segment(off, spatial) + beta.value()(ch);
    }
  }

  auto nx = input.node(), ng = gamma.node(), nb = beta.node();
  const bool train = mode == NormMode::kTrain;
  return detail::make_op<Scalar>(
      input.shape(), std::move(out), {input, gamma, beta},
      [nx, ng, nb, xhat = std::move(xhat), inv_std, n, c, spatial, count,
       train](detail::Node<Scalar>& self) {
        const auto& g = self.grad;
        ArrayX<Scalar> dgamma = ArrayX<Scalar>::Zero(c);
        ArrayX<Scalar> dbeta = ArrayX<Scalar>::Zero(c);
        for (Index i = 0; i < n; ++i) {
          for (Index ch = 0; ch < c; ++ch) {
            const Index off = (i * c + ch) * spatial;
            dbeta(ch) += g.segment(off, spatial).sum();
            dgamma(ch) += (g.segment(off, spatial) * xhat.segment(off, spatial)).sum();
          }
        }
        if (nx->requires_grad) {
          ArrayX<Scalar> gx(g.size());
          for (Index ch = 0; ch < c; ++ch) {
            const Scalar scale = ng->value(ch) * inv_std(ch);
            const Scalar mean_g = dbeta(ch) / static_cast<Scalar>(count);
            const Scalar mean_gx = dgamma(ch) / static_cast<Scalar>(count);
            for (Index i = 0; i < n; ++i) {
              const Index off = (i * c + ch) * spatial;
              if (train) {
                gx.segment(off, spatial) =
                    scale * (g.segment(off, spatial) - mean_g -
                             xhat.segment(off, spatial) * mean_gx);
              } else {
                gx.segment(off, spatial) = scale * g.segment(off, spatial);
              }
            }
          }
          nx->accumulate(gx);
        }
        if (ng->requires_grad) ng->accumulate(dgamma);
        if (nb->requires_grad) nb->accumulate(dbeta);
      });
}

}  // namespace uttenc

#endif  // UTTENC_CONV_HPP_
