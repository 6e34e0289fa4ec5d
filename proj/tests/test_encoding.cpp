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


#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "uttenc/gradcheck.hpp"
#include "uttenc/model.hpp"

using namespace uttenc;
using T = Tensor<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SapParams<double> sap_params(const MatrixXd& W, const VectorXd& b, const VectorXd& u) {
  return {oracle::tensor(W, true), T({b.size()}, b.array(), true), T({u.size()}, u.array(), true)};
}

LdeParams<double> lde_params(const MatrixXd& mu, const VectorXd& s) {
  return {oracle::tensor(mu, true), T({s.size()}, s.array(), true)};
}

MatrixXd permute_columns(const MatrixXd& x, std::mt19937_64& rng) {
  std::vector<Eigen::Index> p(static_cast<std::size_t>(x.cols()));
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) y.col(t) = x.col(p[static_cast<std::size_t>(t)]);
  return y;
}

MatrixXd duplicate(const MatrixXd& x) {
  MatrixXd y(x.rows(), 2 * x.cols());
  y << x, x;
  return y;
}

}  // namespace

TEST_CASE("tap examples") {
  VectorXd v(3);
  v << 1, -2, 4;
  MatrixXd x = v.replicate(1, 5);
  CHECK(oracle::vec(tap(oracle::tensor(x))).isApprox(v, 1e-15));

  MatrixXd one(1, 4);
  one << 1, 2, 3, 6;
  CHECK(tap(oracle::tensor(one))[0] == doctest::Approx(3.0).epsilon(1e-15));

  std::mt19937_64 rng(1);
  MatrixXd r = oracle::gaussian(5, 7, rng);
  CHECK((oracle::vec(tap(oracle::tensor(r))) - oracle::tap(r)).cwiseAbs().maxCoeff() < 1e-7);
  CHECK_THROWS_AS(tap(T::zeros({3, 0})), EmptyInputError);
}

TEST_CASE("sap with a zero context vector is tap") {
  std::mt19937_64 rng(2);
  MatrixXd x = oracle::gaussian(4, 9, rng);
  auto p = sap_params(oracle::gaussian(4, 4, rng), oracle::gaussian(4, 1, rng), VectorXd::Zero(4));
  CHECK((oracle::vec(sap(oracle::tensor(x), p)) - oracle::tap(x)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sap of one frame is that frame") {
  std::mt19937_64 rng(3);
  MatrixXd x = oracle::gaussian(3, 1, rng);
  auto p = sap_params(oracle::gaussian(3, 3, rng), oracle::gaussian(3, 1, rng),
                      oracle::gaussian(3, 1, rng));
  CHECK(oracle::vec(sap(oracle::tensor(x), p)).isApprox(x.col(0), 1e-15));
  CHECK(sap_weights(oracle::tensor(x), p)[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(sap(T::zeros({3, 0}), p), EmptyInputError);
}

TEST_CASE("sap matches the three-equation oracle on hand values") {
  MatrixXd x(2, 3), W(2, 2);
  x << 1.0, -0.5, 2.0, 0.25, 1.5, -1.0;
  W << 0.5, -1.0, 0.75, 0.2;
  VectorXd b(2), u(2);
  b << 0.1, -0.3;
  u << 1.2, -0.7;
  auto p = sap_params(W, b, u);
  VectorXd w_ref;
  const VectorXd ref = oracle::sap(x, W, b, u, &w_ref);
  CHECK((oracle::vec(sap(oracle::tensor(x), p)) - ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((oracle::vec(sap_weights(oracle::tensor(x), p)) - w_ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sap with a rectangular hidden layer matches the oracle") {
  std::mt19937_64 rng(4);
  MatrixXd x = oracle::gaussian(5, 6, rng);
  MatrixXd W = oracle::gaussian(3, 5, rng);
  VectorXd b = oracle::gaussian(3, 1, rng), u = oracle::gaussian(3, 1, rng);
  auto p = sap_params(W, b, u);
  CHECK((oracle::vec(sap(oracle::tensor(x), p)) - oracle::sap(x, W, b, u)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("lde with one center is the mean residual") {
  std::mt19937_64 rng(5);
  MatrixXd x = oracle::gaussian(4, 7, rng);
  MatrixXd mu = oracle::gaussian(1, 4, rng);
  VectorXd s = VectorXd::Constant(1, 0.8);
  auto e = lde(oracle::tensor(x), lde_params(mu, s));
  const VectorXd ref = oracle::tap(x) - mu.row(0).transpose();
  CHECK(e.shape() == Shape{1, 4});
  CHECK((oracle::vec(e) - ref).cwiseAbs().maxCoeff() < 1e-6);
  auto w = lde_assignments(oracle::tensor(x), lde_params(mu, s));
  CHECK((w.value() == 1.0).all());
}

TEST_CASE("lde zero residual annihilates its center's encoding") {
  MatrixXd mu(2, 3);
  mu << 0.5, -1, 2, -0.3, 0.4, 1;
  MatrixXd x = mu.row(0).transpose().replicate(1, 6);
  VectorXd s = VectorXd::Constant(2, 1.3);
  auto e = lde(oracle::tensor(x), lde_params(mu, s));
  for (Index j = 0; j < 3; ++j) CHECK(e[j] == 0.0);
  CHECK(oracle::matrix(e).row(1).norm() > 0);
}

TEST_CASE("lde matches the explicit-loop oracle on hand values") {
  MatrixXd x(2, 3), mu(2, 2);
  x << 0.2, 1.0, -0.7, 1.5, -0.4, 0.3;
  mu << 0.0, 1.0, 0.5, -0.5;
  VectorXd s(2);
  s << 0.9, 1.7;
  for (bool normalized : {false, true}) {
    auto agg = normalized ? LdeAggregation::kWeightNormalized : LdeAggregation::kFrameMean;
    auto e = lde(oracle::tensor(x), lde_params(mu, s), agg);
    const MatrixXd ref = oracle::lde(x, mu, s, normalized);
    CHECK((oracle::matrix(e) - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("lde stays finite for large distances") {
  MatrixXd x = MatrixXd::Constant(2, 3, 100.0), mu(2, 2);
  mu << 0, 0, -50, 10;
  VectorXd s = VectorXd::Constant(2, 5.0);
  auto e = lde(oracle::tensor(x), lde_params(mu, s));
  CHECK(e.value().allFinite());
  CHECK((oracle::matrix(e) - oracle::lde(x, mu, s)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pooling invariances over 100 random instances") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> dims(1, 8), frames(1, 20), comps(1, 5);
  double tap_perm = 0, sap_perm = 0, lde_perm = 0, tap_dup = 0, sap_dup = 0, lde_dup = 0;
  double sap_wsum = 0, lde_wsum = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dims(rng), l = frames(rng), c = comps(rng);
    MatrixXd x = oracle::gaussian(d, l, rng, 2.0);
    MatrixXd xp = permute_columns(x, rng), xd = duplicate(x);
    auto sp = sap_params(oracle::gaussian(d, d, rng), oracle::gaussian(d, 1, rng),
                         oracle::gaussian(d, 1, rng));
    MatrixXd mu = oracle::gaussian(c, d, rng);
    VectorXd s = oracle::gaussian(c, 1, rng).cwiseAbs();
    auto lp = lde_params(mu, s);
    auto diff = [](const T& a, const T& b) { return (a.value() - b.value()).abs().maxCoeff(); };
    const auto tx = oracle::tensor(x), tp = oracle::tensor(xp), td = oracle::tensor(xd);
    tap_perm = std::max(tap_perm, diff(tap(tx), tap(tp)));
    sap_perm = std::max(sap_perm, diff(sap(tx, sp), sap(tp, sp)));
    lde_perm = std::max(lde_perm, diff(lde(tx, lp), lde(tp, lp)));
    tap_dup = std::max(tap_dup, diff(tap(tx), tap(td)));
    sap_dup = std::max(sap_dup, diff(sap(tx, sp), sap(td, sp)));
    lde_dup = std::max(lde_dup, diff(lde(tx, lp), lde(td, lp)));
    auto w = sap_weights(tx, sp);
    CHECK((w.value() > 0).all());
    sap_wsum = std::max(sap_wsum, std::abs(w.value().sum() - 1));
    const auto a = oracle::matrix(lde_assignments(tx, lp));
    for (Eigen::Index t = 0; t < a.cols(); ++t)
      lde_wsum = std::max(lde_wsum, std::abs(a.col(t).sum() - 1));
  }
  CHECK(tap_perm < 1e-6);
  CHECK(sap_perm < 1e-6);
  CHECK(lde_perm < 1e-6);
  CHECK(tap_dup < 1e-6);
  CHECK(sap_dup < 1e-6);
  CHECK(lde_dup < 1e-6);
  CHECK(sap_wsum < 1e-6);
  CHECK(lde_wsum < 1e-6);
}

TEST_CASE("batched pooling equals per-utterance pooling") {
  std::mt19937_64 rng(7);
  MatrixXd a = oracle::gaussian(3, 5, rng), b = oracle::gaussian(3, 5, rng);
  ArrayX<double> both(30);
  both << Eigen::Map<const ArrayX<double>>(oracle::tensor(a).value().data(), 15),
      Eigen::Map<const ArrayX<double>>(oracle::tensor(b).value().data(), 15);
  T batch({2, 3, 5}, both);
  auto sp = sap_params(oracle::gaussian(3, 3, rng), oracle::gaussian(3, 1, rng),
                       oracle::gaussian(3, 1, rng));
  auto lp = lde_params(oracle::gaussian(2, 3, rng), VectorXd::Ones(2));
  auto s = sap(batch, sp);
  CHECK(s.shape() == Shape{2, 3});
  CHECK((s.value().tail(3) - sap(oracle::tensor(b), sp).value()).abs().maxCoeff() < 1e-12);
  auto e = lde(batch, lp);
  CHECK(e.shape() == Shape{2, 2, 3});
  CHECK((e.value().head(6) - lde(oracle::tensor(a), lp).value()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder gradients match finite differences") {
  std::mt19937_64 rng(8);
  MatrixXd x = oracle::gaussian(4, 6, rng);
  auto tx = oracle::tensor(x, true);
  auto sp = sap_params(oracle::gaussian(4, 4, rng, 0.5), oracle::gaussian(4, 1, rng, 0.5),
                       oracle::gaussian(4, 1, rng));
  auto lp = lde_params(oracle::gaussian(3, 4, rng), oracle::gaussian(3, 1, rng).cwiseAbs());
  auto probe4 = T({4}, oracle::gaussian(4, 1, rng).array());
  auto probe12 = T({3, 4}, oracle::gaussian(12, 1, rng).array());
  CHECK(check_gradients<double>("tap", [&] { return sum_all(mul(tap(tx), probe4)); }, {tx}).passed());
  CHECK(check_gradients<double>("sap", [&] { return sum_all(mul(sap(tx, sp), probe4)); },
                                {tx, sp.weight, sp.bias, sp.context})
            .passed());
  for (auto agg : {LdeAggregation::kFrameMean, LdeAggregation::kWeightNormalized})
    CHECK(check_gradients<double>("lde", [&] { return sum_all(mul(lde(tx, lp, agg), probe12)); },
                                  {tx, lp.centers, lp.smoothing})
              .passed());
}

TEST_CASE("model embedding dimension is independent of the input length") {
  ModelConfig cfg;
  cfg.frontend.width_multiplier = 0.25;
  cfg.num_classes = 4;
  for (auto kind : {EncoderKind::kTap, EncoderKind::kSap, EncoderKind::kLde}) {
    cfg.encoder = kind;
    cfg.lde_components = 8;
    Model<float> model(cfg, 1);
    NoGradGuard guard;
    for (Index l : {Index{8}, Index{300}, Index{800}}) {
      auto e = model.embed(Tensor<float>::zeros({1, 1, 64, l}), NormMode::kEval);
      CHECK(e.shape() == Shape{1, 128});
    }
    CHECK(cfg.encoding_dim() == (kind == EncoderKind::kLde ? 8 * 32 : 32));
  }
}

TEST_CASE("embedding is deterministic and invariant to frame order after the frontend") {
  ModelConfig cfg;
  cfg.frontend.width_multiplier = 0.25;
  cfg.frontend.blocks_per_stage = {1, 1, 1, 1};
  cfg.num_classes = 3;
  std::mt19937_64 rng(9);
  for (auto kind : {EncoderKind::kTap, EncoderKind::kSap, EncoderKind::kLde}) {
    cfg.encoder = kind;
    cfg.lde_components = 4;
    Model<double> model(cfg, 2);
    NoGradGuard guard;
    MatrixXd feats = oracle::gaussian(64, 40, rng);
    T x({1, 1, 64, 40}, oracle::tensor(feats).value());
    auto e1 = model.embed(x, NormMode::kEval), e2 = model.embed(x, NormMode::kEval);
    CHECK((e1.value() == e2.value()).all());

    auto frames = model.frontend().forward(x, NormMode::kEval);
    const MatrixXd f = oracle::matrix(reshape(frames, {frames.dim(1), frames.dim(2)}));
    const MatrixXd fp = permute_columns(f, rng);
    auto tp = oracle::tensor(fp);
    auto a = model.project(model.encode(frames));
    auto b = model.project(model.encode(reshape(tp, {1, fp.rows(), fp.cols()})));
    CHECK((a.value() - b.value()).abs().maxCoeff() < 1e-9);
  }
}
