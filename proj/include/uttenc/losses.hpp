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

#ifndef UTTENC_LOSSES_HPP_
#define UTTENC_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uttenc/ops.hpp"

namespace uttenc {

enum class LossKind { kSoftmax, kCenter, kASoftmax };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Angular margin settings. The annealed true-class logit is
/// (lambda * cos(theta) + phi(theta)) / (1 + lambda), with lambda decaying
/// multiplicatively from `anneal_start` to `anneal_floor`.
struct MarginConfig {
  int m = 4;
  bool anneal = false;
  double anneal_start = 1000.0;
  double anneal_decay = 0.95;  // per optimiser step
  double anneal_floor = 5.0;

  void validate() const;
  /// Annealing weight after `step` optimiser steps; 0 when annealing is off.
  double lambda_at(long step) const;
};

/// cos(m * theta) expressed as the Chebyshev polynomial T_m(cos theta).
inline double chebyshev(double c, int m) {
  switch (m) {
    case 1: return c;
    case 2: return 2 * c * c - 1;
    case 3: return (4 * c * c - 3) * c;
    case 4: return 8 * c * c * (c * c - 1) + 1;
  }
  throw std::invalid_argument("angular margin m must be in 1..4");
}

inline double chebyshev_derivative(double c, int m) {
  switch (m) {
    case 1: return 1;
    case 2: return 4 * c;
    case 3: return 12 * c * c - 3;
    case 4: return (32 * c * c - 16) * c;
  }
  throw std::invalid_argument("angular margin m must be in 1..4");
}

/// Segment index k with theta in [k pi/m, (k+1) pi/m]. A theta exactly on an
/// interior boundary belongs to the left segment.
inline int margin_segment(double theta, int m) {
  const int k = static_cast<int>(std::ceil(theta * m / std::numbers::pi)) - 1;
  return std::clamp(k, 0, m - 1);
}

/// phi(theta) = (-1)^k cos(m theta) - 2k, the margin-penalised angle
/// function. Monotone decreasing on [0, pi] with phi(0) = 1, phi(pi) = 1 - 2m.
inline double phi(double theta, int m) {
  const int k = margin_segment(theta, m);
  const double sign = (k % 2) ? -1.0 : 1.0;
  return sign * chebyshev(std::cos(theta), m) - 2.0 * k;
}

/// Cosine clamp applied before the margin function.
inline constexpr double kCosClamp = 1e-7;

template <typename Scalar>
struct ClassifierHead {
  Tensor<Scalar> weight;  // E x C
  Tensor<Scalar> bias;    // C

  Index classes() const { return weight.dim(1); }

  static ClassifierHead init(Index embedding_dim, Index classes,
                             std::mt19937_64& rng) {
    std::normal_distribution<double> dist(
        0.0, std::sqrt(1.0 / static_cast<double>(embedding_dim)));
    ArrayX<Scalar> w(embedding_dim * classes);
    for (Index i = 0; i < w.size(); ++i) w(i) = static_cast<Scalar>(dist(rng));
    return {Tensor<Scalar>({embedding_dim, classes}, std::move(w), true),
            Tensor<Scalar>::zeros({classes}, true)};
  }

  /// Rescales every column of W to unit length and zeroes b.
  void normalize_columns() {
    Eigen::Map<RowMatrix<Scalar>> w(weight.mutable_value().data(), weight.dim(0),
                                    weight.dim(1));
    for (Index j = 0; j < w.cols(); ++j) {
      const Scalar n = w.col(j).norm();
      if (n > Scalar(0)) w.col(j) /= n;
    }
    bias.mutable_value().setZero();
  }
};

/// Per-class feature centers for joint softmax + center-loss supervision.
template <typename Scalar>
struct CenterBank {
  RowMatrix<Scalar> centers;  // C x E
  double lambda = 0.001;
  double alpha = 0.5;

  static CenterBank zeros(Index classes, Index embedding_dim, double lambda,
                          double alpha) {
    return {RowMatrix<Scalar>::Zero(classes, embedding_dim), lambda, alpha};
  }
};

namespace detail {

inline void check_labels(std::span<const int> labels, Index batch, Index classes) {
  if (static_cast<Index>(labels.size()) != batch) {
    throw DimensionError(std::to_string(labels.size()) + " labels for a batch of " +
                         std::to_string(batch));
  }
  if (batch < 1) throw EmptyInputError("loss over an empty batch");
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
  }
}

}  // namespace detail

/// Mean negative log-likelihood of the labels under softmax(logits).
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels) {
  detail::check_labels(labels, logits.dim(0), logits.dim(1));
  return neg(mean_all(pick(log_softmax(logits, 1), labels)));
}

template <typename Scalar>
Tensor<Scalar> linear_logits(const Tensor<Scalar>& f, const ClassifierHead<Scalar>& head) {
  return add(matmul(f, head.weight), head.bias);
}

/// Softmax cross-entropy of the classifier head applied to embeddings f (M x E).
template <typename Scalar>
Tensor<Scalar> softmax_loss(const Tensor<Scalar>& f, std::span<const int> labels,
                            const ClassifierHead<Scalar>& head) {
  return cross_entropy(linear_logits(f, head), labels);
}

/// (lambda / 2) * sum_i ||f_i - c_{y_i}||^2 with the centers held constant.
template <typename Scalar>
Tensor<Scalar> center_penalty(const Tensor<Scalar>& f, std::span<const int> labels,
                              const CenterBank<Scalar>& bank) {
  const Index m = f.dim(0), e = f.dim(1);
  detail::check_labels(labels, m, bank.centers.rows());
  if (bank.centers.cols() != e) {
    throw DimensionError("center bank of width " + std::to_string(bank.centers.cols()) +
                         " for embeddings " + to_string(f.shape()));
  }
  ArrayX<Scalar> c(m * e);
  for (Index i = 0; i < m; ++i)
    c.segment(i * e, e) = bank.centers.row(labels[static_cast<std::size_t>(i)]).transpose().array();
  Tensor<Scalar> gathered({m, e}, std::move(c));
  return scale(sum_all(square(sub(f, gathered))), static_cast<Scalar>(bank.lambda / 2));
}

/// Softmax loss plus the center penalty.
template <typename Scalar>
Tensor<Scalar> center_loss(const Tensor<Scalar>& f, std::span<const int> labels,
                           const ClassifierHead<Scalar>& head,
                           const CenterBank<Scalar>& bank) {
  auto ls = softmax_loss(f, labels, head);
  if (bank.lambda == 0.0) return ls;
  return add(ls, center_penalty(f, labels, bank));
}

/// Center update from a batch of detached embeddings:
/// c_j -= alpha * sum_{i: y_i = j} (c_j - f_i) / (1 + n_j).
template <typename Scalar>
void step_centers(CenterBank<Scalar>& bank, const Tensor<Scalar>& f,
                  std::span<const int> labels) {
  const Index m = f.dim(0), e = f.dim(1);
  detail::check_labels(labels, m, bank.centers.rows());
  Eigen::Map<const RowMatrix<Scalar>> feats(f.value().data(), m, e);
  RowMatrix<Scalar> delta = RowMatrix<Scalar>::Zero(bank.centers.rows(), e);
  std::vector<int> count(static_cast<std::size_t>(bank.centers.rows()), 0);
  for (Index i = 0; i < m; ++i) {
    const int j = labels[static_cast<std::size_t>(i)];
    delta.row(j) += bank.centers.row(j) - feats.row(i);
    ++count[static_cast<std::size_t>(j)];
  }
  for (Index j = 0; j < bank.centers.rows(); ++j) {
    const int n = count[static_cast<std::size_t>(j)];
    if (n == 0) continue;
    bank.centers.row(j) -=
        static_cast<Scalar>(bank.alpha) * delta.row(j) / static_cast<Scalar>(1 + n);
  }
}

/// Cosine between every embedding (row of f) and every head column, M x C.
template <typename Scalar>
Tensor<Scalar> cosine_matrix(const Tensor<Scalar>& f, const Tensor<Scalar>& weight,
                             Tensor<Scalar>* f_norm = nullptr) {
  auto fn = l2norm(f, 1, true);
  if ((fn.value() <= Scalar(0)).any()) {
    throw DegenerateInputError("angular softmax: zero-norm embedding");
  }
  auto wn = l2norm(weight, 0, true);
  if ((wn.value() <= Scalar(0)).any()) {
    throw DegenerateInputError("angular softmax: zero-norm class weight");
  }
  if (f_norm) *f_norm = fn;
  return div(div(matmul(f, weight), fn), wn);
}

/// Replaces the true-class cosine of each row by the annealed margin value
/// (lambda c + (-1)^k T_m(c) - 2k) / (1 + lambda); other entries pass through.
template <typename Scalar>
Tensor<Scalar> angular_margin(const Tensor<Scalar>& cosine, std::span<const int> labels,
                              int m, double lambda) {
  const Index rows = cosine.dim(0), cols = cosine.dim(1);
  detail::check_labels(labels, rows, cols);
  ArrayX<Scalar> out = cosine.value();
  std::vector<std::pair<Index, double>> slope;  // flat index, d out / d cos
  slope.reserve(labels.size());
  for (Index i = 0; i < rows; ++i) {
    const Index at = i * cols + labels[static_cast<std::size_t>(i)];
    const double c = std::clamp(static_cast<double>(out(at)), -1.0 + kCosClamp,
                                1.0 - kCosClamp);
    const int k = margin_segment(std::acos(c), m);
    const double sign = (k % 2) ? -1.0 : 1.0;
    const double value = (lambda * c + sign * chebyshev(c, m) - 2.0 * k) / (1.0 + lambda);
    out(at) = static_cast<Scalar>(value);
    slope.emplace_back(at, (lambda + sign * chebyshev_derivative(c, m)) / (1.0 + lambda));
  }
  auto nc = cosine.node();
  return detail::make_op<Scalar>(
      cosine.shape(), std::move(out), {cosine}, [nc, slope](detail::Node<Scalar>& self) {
        ArrayX<Scalar> g = self.grad;
        for (const auto& [at, d] : slope) g(at) *= static_cast<Scalar>(d);
        nc->accumulate(g);
      });
}

/// Logits ||f_i|| * psi for the true class and ||f_i|| * cos(theta_j) otherwise.
template <typename Scalar>
Tensor<Scalar> asoftmax_logits(const Tensor<Scalar>& f, std::span<const int> labels,
                               const ClassifierHead<Scalar>& head, const MarginConfig& cfg,
                               double lambda = 0.0) {
  cfg.validate();
  Tensor<Scalar> fn;
  auto cosine = cosine_matrix(f, head.weight, &fn);
  return mul(angular_margin(cosine, labels, cfg.m, lambda), fn);
}

/// Angular softmax (A-Softmax) loss. `lambda` is the current annealing weight.
template <typename Scalar>
Tensor<Scalar> asoftmax_loss(const Tensor<Scalar>& f, std::span<const int> labels,
                             const ClassifierHead<Scalar>& head, const MarginConfig& cfg,
                             double lambda = 0.0) {
  return cross_entropy(asoftmax_logits(f, labels, head, cfg, lambda), labels);
}

}  // namespace uttenc

#endif  // UTTENC_LOSSES_HPP_
