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

// End-to-end network: frontend -> encoder -> FC embedding -> classifier.

#ifndef UTTENC_MODEL_HPP_
#define UTTENC_MODEL_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uttenc/encoding.hpp"
#include "uttenc/frontend.hpp"
#include "uttenc/losses.hpp"

namespace uttenc {

struct ModelConfig {
  FrontendConfig frontend;
  EncoderKind encoder = EncoderKind::kTap;
  Index lde_components = 64;
  LdeAggregation lde_aggregation = LdeAggregation::kFrameMean;
  bool clamp_smoothing = false;  // keep LDE smoothing factors >= 0
  Index sap_hidden = 0;          // 0: same as the frontend output width
  Index embedding_dim = 128;
  LossKind loss = LossKind::kSoftmax;
  MarginConfig margin;
  double center_lambda = 0.001;
  double center_alpha = 0.5;
  Index num_classes = 0;

  void validate() const;
  /// Width of the pooled utterance vector fed to the FC layer.
  Index encoding_dim() const;
};

template <typename Scalar>
class Model {
 public:
  using ScalarType = Scalar;

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    frontend_ = Frontend<Scalar>(cfg.frontend, rng);
    const Index d = frontend_.output_channels();
    if (cfg.encoder == EncoderKind::kSap) {
      sap_ = SapParams<Scalar>::init(d, cfg.sap_hidden > 0 ? cfg.sap_hidden : d, rng);
    } else if (cfg.encoder == EncoderKind::kLde) {
      lde_ = LdeParams<Scalar>::init(cfg.lde_components, d, rng);
    }
    const Index in = cfg.encoding_dim();
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(in)));
    ArrayX<Scalar> w(in * cfg.embedding_dim);
    for (Index i = 0; i < w.size(); ++i) w(i) = static_cast<Scalar>(dist(rng));
    fc_weight_ = Tensor<Scalar>({in, cfg.embedding_dim}, std::move(w), true);
    fc_bias_ = Tensor<Scalar>::zeros({cfg.embedding_dim}, true);
    head_ = ClassifierHead<Scalar>::init(cfg.embedding_dim, cfg.num_classes, rng);
    if (cfg.loss == LossKind::kASoftmax) head_.normalize_columns();
    centers_ = CenterBank<Scalar>::zeros(cfg.num_classes, cfg.embedding_dim,
                                         cfg.center_lambda, cfg.center_alpha);
  }

  const ModelConfig& config() const { return cfg_; }
  Frontend<Scalar>& frontend() { return frontend_; }
  ClassifierHead<Scalar>& head() { return head_; }
  CenterBank<Scalar>& centers() { return centers_; }
  const SapParams<Scalar>& sap_params() const { return sap_; }
  const LdeParams<Scalar>& lde_params() const { return lde_; }

  /// Pools N x D x L frame-level maps into N x encoding_dim().
  Tensor<Scalar> encode(const Tensor<Scalar>& frames) const {
    const Index n = frames.dim(0);
    switch (cfg_.encoder) {
      case EncoderKind::kTap:
        return tap(frames);
      case EncoderKind::kSap:
        return sap(frames, sap_);
      case EncoderKind::kLde:
        return reshape(lde(frames, lde_, cfg_.lde_aggregation), {n, cfg_.encoding_dim()});
    }
    throw std::logic_error("unknown encoder");
  }

  /// FC projection of pooled vectors to embeddings.
  Tensor<Scalar> project(const Tensor<Scalar>& pooled) const {
    return add(matmul(pooled, fc_weight_), fc_bias_);
  }

  /// N x 1 x F x L features to N x embedding_dim embeddings.
  Tensor<Scalar> embed(const Tensor<Scalar>& x, NormMode mode) {
    return project(encode(frontend_.forward(x, mode)));
  }

  /// Training objective on a batch of embeddings. `anneal_lambda` only
  /// affects the angular softmax.
  Tensor<Scalar> loss(const Tensor<Scalar>& emb, std::span<const int> labels,
                      double anneal_lambda = 0.0) const {
    switch (cfg_.loss) {
      case LossKind::kSoftmax:
        return softmax_loss(emb, labels, head_);
      case LossKind::kCenter:
        return center_loss(emb, labels, head_, centers_);
      case LossKind::kASoftmax:
        return asoftmax_loss(emb, labels, head_, cfg_.margin, anneal_lambda);
    }
    throw std::logic_error("unknown loss");
  }

  /// Class scores used for prediction: cosine for the angular head,
  /// linear logits otherwise.
  Tensor<Scalar> class_scores(const Tensor<Scalar>& emb) const {
    NoGradGuard guard;
    if (cfg_.loss == LossKind::kASoftmax) return cosine_matrix(emb, head_.weight);
    return linear_logits(emb, head_);
  }

  std::vector<int> predict(const Tensor<Scalar>& emb) const {
    auto scores = class_scores(emb);
    const auto m = scores.matrix();
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) {
      Index best = 0;
      m.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }

  /// Updates that follow every optimiser step.
  void after_step(const Tensor<Scalar>& emb, std::span<const int> labels) {
    if (cfg_.loss == LossKind::kCenter) step_centers(centers_, emb.detach(), labels);
    if (cfg_.loss == LossKind::kASoftmax) head_.normalize_columns();
    if (cfg_.encoder == EncoderKind::kLde && cfg_.clamp_smoothing)
      lde_.smoothing.mutable_value() = lde_.smoothing.value().max(Scalar(0));
  }

  /// Every learnable tensor and buffer, in a stable order.
  ParameterSet<Scalar> parameters() {
    ParameterSet<Scalar> set;
    frontend_.collect(set, "frontend");
    if (cfg_.encoder == EncoderKind::kSap) {
      set.add("encoder.sap.weight", sap_.weight, true);
      set.add("encoder.sap.bias", sap_.bias, false);
      set.add("encoder.sap.context", sap_.context, false);
    } else if (cfg_.encoder == EncoderKind::kLde) {
      set.add("encoder.lde.centers", lde_.centers, false);
      set.add("encoder.lde.smoothing", lde_.smoothing, false);
    }
    set.add("embedding.weight", fc_weight_, true);
    set.add("embedding.bias", fc_bias_, false);
    set.add("head.weight", head_.weight, true);
    set.add("head.bias", head_.bias, false);
    if (cfg_.loss == LossKind::kCenter) set.add_buffer("loss.centers", centers_.centers);
    return set;
  }

 private:
  ModelConfig cfg_;
  Frontend<Scalar> frontend_;
  SapParams<Scalar> sap_;
  LdeParams<Scalar> lde_;
  Tensor<Scalar> fc_weight_;
  Tensor<Scalar> fc_bias_;
  ClassifierHead<Scalar> head_;
  CenterBank<Scalar> centers_;
};

}  // namespace uttenc

#endif  // UTTENC_MODEL_HPP_
