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

// Utterance-level encoders. Each maps a D x L frame matrix (or an
// M x D x L batch) to a representation whose size does not depend on L:
//
//   tap  temporal average pooling                         -> D
//   sap  self-attentive pooling, one-layer perceptron     -> D
//   lde  learnable dictionary encoding with C centers     -> C x D
//
// All three are sums over frames of per-frame terms, so they are invariant
// to the order of the frames.

#ifndef UTTENC_ENCODING_HPP_
#define UTTENC_ENCODING_HPP_

#include <cmath>
#include <random>
#include <string>

#include "uttenc/ops.hpp"

namespace uttenc {

enum class EncoderKind { kTap, kSap, kLde };

/// Residual aggregation for LDE: divide by the frame count, or by the
/// total assignment weight of each center.
enum class LdeAggregation { kFrameMean, kWeightNormalized };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& name);

template <typename Scalar>
struct SapParams {
  Tensor<Scalar> weight;   // H x D
  Tensor<Scalar> bias;     // H
  Tensor<Scalar> context;  // H

  static SapParams init(Index dim, Index hidden, std::mt19937_64& rng) {
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(dim)));
    std::normal_distribution<double> small(0.0, 0.1);
    ArrayX<Scalar> w(hidden * dim), u(hidden);
    for (Index i = 0; i < w.size(); ++i) w(i) = static_cast<Scalar>(he(rng));
    for (Index i = 0; i < u.size(); ++i) u(i) = static_cast<Scalar>(small(rng));
    return {Tensor<Scalar>({hidden, dim}, std::move(w), true),
            Tensor<Scalar>::zeros({hidden}, true),
            Tensor<Scalar>({hidden}, std::move(u), true)};
  }
};

template <typename Scalar>
struct LdeParams {
  Tensor<Scalar> centers;    // C x D
  Tensor<Scalar> smoothing;  // C

  Index components() const { return centers.dim(0); }

  static LdeParams init(Index components, Index dim, std::mt19937_64& rng) {
    if (components < 1) throw std::invalid_argument("LDE needs at least one center");
    const double bound = 1.0 / std::sqrt(static_cast<double>(components));
    std::uniform_real_distribution<double> uni(-bound, bound);
    ArrayX<Scalar> mu(components * dim);
    for (Index i = 0; i < mu.size(); ++i) mu(i) = static_cast<Scalar>(uni(rng));
    return {Tensor<Scalar>({components, dim}, std::move(mu), true),
            Tensor<Scalar>::full({components}, Scalar(1), true)};
  }
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> as_batch(const Tensor<Scalar>& x, const char* who) {
  if (x.rank() == 2) return reshape(x, {1, x.dim(0), x.dim(1)});
  if (x.rank() == 3) return x;
  throw DimensionError(std::string(who) + ": expected D x L or M x D x L, got " +
                       to_string(x.shape()));
}

template <typename Scalar>
void require_frames(const Tensor<Scalar>& x, const char* who) {
  if (x.dim(x.rank() - 1) == 0) {
    throw EmptyInputError(std::string(who) + ": utterance has no frames");
  }
}

template <typename Scalar>
Tensor<Scalar> unbatch(const Tensor<Scalar>& y, bool single) {
  if (!single) return y;
  Shape s(y.shape().begin() + 1, y.shape().end());
  return reshape(y, std::move(s));
}

}  // namespace detail

/// Temporal average pooling: per-coefficient mean over the last axis.
template <typename Scalar>
Tensor<Scalar> tap(const Tensor<Scalar>& x) {
  detail::require_frames(x, "tap");
  return mean(x, -1);
}

/// Attention weights of self-attentive pooling, M x L (or L).
template <typename Scalar>
Tensor<Scalar> sap_weights(const Tensor<Scalar>& x, const SapParams<Scalar>& p) {
  detail::require_frames(x, "sap");
  const bool single = x.rank() == 2;
  const auto xb = detail::as_batch(x, "sap");
  const Index m = xb.dim(0), d = xb.dim(1), l = xb.dim(2);
  if (p.weight.rank() != 2 || p.weight.dim(1) != d) {
    throw DimensionError("sap: weight " + to_string(p.weight.shape()) +
                         " does not accept " + std::to_string(d) + "-dim frames");
  }
  const Index hidden = p.weight.dim(0);
  auto frames = reshape(permute(xb, {0, 2, 1}), {m * l, d});
  auto h = tanh(add(matmul(frames, transpose(p.weight)), p.bias));
  auto score = matmul(h, reshape(p.context, {hidden, 1}));
  auto w = softmax(reshape(score, {m, l}), 1);
  return single ? reshape(w, {l}) : w;
}

/// Self-attentive pooling: e = sum_t w_t x_t with
/// w = softmax_t(u . tanh(W x_t + b)).
template <typename Scalar>
Tensor<Scalar> sap(const Tensor<Scalar>& x, const SapParams<Scalar>& p) {
  const bool single = x.rank() == 2;
  const auto xb = detail::as_batch(x, "sap");
  auto w = sap_weights(xb, p);
  auto e = sum(mul(xb, reshape(w, {xb.dim(0), 1, xb.dim(2)})), 2);
  return detail::unbatch(e, single);
}

/// Soft assignment of every frame to every center, M x C x L (or C x L).
/// Column t sums to one over the centers.
template <typename Scalar>
Tensor<Scalar> lde_assignments(const Tensor<Scalar>& x, const LdeParams<Scalar>& p) {
  detail::require_frames(x, "lde");
  const bool single = x.rank() == 2;
  const auto xb = detail::as_batch(x, "lde");
  const Index m = xb.dim(0), d = xb.dim(1), l = xb.dim(2), c = p.components();
  if (p.centers.dim(1) != d || p.smoothing.size() != c) {
    throw DimensionError("lde: centers " + to_string(p.centers.shape()) +
                         " do not accept " + std::to_string(d) + "-dim frames");
  }
  auto r = sub(reshape(xb, {m, 1, d, l}), reshape(p.centers, {1, c, d, 1}));
  auto dist = sum(square(r), 2);
  auto w = softmax(neg(mul(reshape(p.smoothing, {1, c, 1}), dist)), 1);
  return detail::unbatch(w, single);
}

/// Learnable dictionary encoding. Row c of the result is
///   e_c = sum_t w_tc (x_t - mu_c) / L                (kFrameMean)
///   e_c = sum_t w_tc (x_t - mu_c) / sum_t w_tc       (kWeightNormalized)
/// Output is M x C x D (or C x D); flattening it row-major gives the
/// concatenation [e_1; ...; e_C].
template <typename Scalar>
Tensor<Scalar> lde(const Tensor<Scalar>& x, const LdeParams<Scalar>& p,
                   LdeAggregation aggregation = LdeAggregation::kFrameMean) {
  detail::require_frames(x, "lde");
  const bool single = x.rank() == 2;
  const auto xb = detail::as_batch(x, "lde");
  const Index m = xb.dim(0), d = xb.dim(1), l = xb.dim(2), c = p.components();
  if (p.centers.dim(1) != d || p.smoothing.size() != c) {
    throw DimensionError("lde: centers " + to_string(p.centers.shape()) +
                         " do not accept " + std::to_string(d) + "-dim frames");
  }
  auto r = sub(reshape(xb, {m, 1, d, l}), reshape(p.centers, {1, c, d, 1}));
  auto dist = sum(square(r), 2);
  auto w = softmax(neg(mul(reshape(p.smoothing, {1, c, 1}), dist)), 1);
  auto e = sum(mul(reshape(w, {m, c, 1, l}), r), 3);
  if (aggregation == LdeAggregation::kFrameMean) {
    e = scale(e, Scalar(1) / static_cast<Scalar>(l));
  } else {
    e = div(e, sum(w, 2, true));
  }
  return detail::unbatch(e, single);
}

}  // namespace uttenc

#endif  // UTTENC_ENCODING_HPP_
