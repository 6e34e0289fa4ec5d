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
#include <numbers>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "uttenc/gradcheck.hpp"
#include "uttenc/losses.hpp"

using namespace uttenc;
using T = Tensor<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ClassifierHead<double> head_of(const MatrixXd& W, const VectorXd& b) {
  return {oracle::tensor(W, true), T({b.size()}, b.array(), true)};
}

MatrixXd unit_columns(MatrixXd W) {
  for (Eigen::Index j = 0; j < W.cols(); ++j) W.col(j).normalize();
  return W;
}

std::vector<int> labels(int n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = d(rng);
  return y;
}

}  // namespace

TEST_CASE("softmax loss of equal logits is log C") {
  for (int c : {2, 5, 17}) {
    auto head = head_of(MatrixXd::Random(4, c), VectorXd::Zero(c));
    const std::vector<int> y = {0, c - 1, 1};
    CHECK(softmax_loss(T::zeros({3, 4}), y, head).item() == doctest::Approx(std::log(c)).epsilon(1e-14));
  }
}

TEST_CASE("softmax loss vanishes as the true logit grows") {
  double prev = 1e9;
  for (double v : {1.0, 5.0, 20.0, 60.0}) {
    MatrixXd W = MatrixXd::Zero(2, 3);
    W(0, 1) = v;
    auto head = head_of(W, VectorXd::Zero(3));
    MatrixXd f(1, 2);
    f << 1, 0;
    const std::vector<int> y = {1};
    const double l = softmax_loss(oracle::tensor(f), y, head).item();
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-20);
}

TEST_CASE("softmax loss matches the direct oracle") {
  MatrixXd f(2, 2), W(2, 3);
  f << 0.5, -1.0, 2.0, 0.25;
  W << 1.0, -0.5, 0.3, 0.2, 0.8, -1.1;
  VectorXd b(3);
  b << 0.1, 0.0, -0.2;
  const std::vector<int> y = {2, 0};
  MatrixXd logits = (f * W).rowwise() + b.transpose();
  CHECK(softmax_loss(oracle::tensor(f), y, head_of(W, b)).item() ==
        doctest::Approx(oracle::cross_entropy(logits, y)).epsilon(1e-14));
}

TEST_CASE("labels are range-checked") {
  auto head = head_of(MatrixXd::Random(2, 3), VectorXd::Zero(3));
  const std::vector<int> bad = {3};
  CHECK_THROWS_AS(softmax_loss(T::zeros({1, 2}), bad, head), std::out_of_range);
  const std::vector<int> neg = {-1};
  CHECK_THROWS_AS(softmax_loss(T::zeros({1, 2}), neg, head), std::out_of_range);
}

TEST_CASE("center loss with lambda 0 equals softmax loss exactly") {
  std::mt19937_64 rng(1);
  MatrixXd f = oracle::gaussian(6, 4, rng);
  auto head = head_of(oracle::gaussian(4, 3, rng), oracle::gaussian(3, 1, rng));
  auto bank = CenterBank<double>::zeros(3, 4, 0.0, 0.5);
  bank.centers = oracle::gaussian(3, 4, rng);
  const auto y = labels(6, 3, rng);
  CHECK(center_loss(oracle::tensor(f), y, head, bank).item() ==
        softmax_loss(oracle::tensor(f), y, head).item());
}

TEST_CASE("center term vanishes when features sit on their centers") {
  std::mt19937_64 rng(2);
  auto bank = CenterBank<double>::zeros(3, 4, 0.5, 0.5);
  bank.centers = oracle::gaussian(3, 4, rng);
  const std::vector<int> y = {2, 0, 2};
  MatrixXd f(3, 4);
  for (int i = 0; i < 3; ++i) f.row(i) = bank.centers.row(y[static_cast<std::size_t>(i)]);
  CHECK(center_penalty(oracle::tensor(f), y, bank).item() == 0.0);
}

TEST_CASE("center loss matches the direct oracle") {
  MatrixXd f(2, 2), W(2, 2);
  f << 1.0, 2.0, -0.5, 0.5;
  W << 0.3, -0.2, 0.1, 0.4;
  auto bank = CenterBank<double>::zeros(2, 2, 0.5, 0.5);
  bank.centers << 0.5, 1.0, 0.0, -1.0;
  const std::vector<int> y = {0, 1};
  auto head = head_of(W, VectorXd::Zero(2));
  const double penalty = (f.row(0) - bank.centers.row(0)).squaredNorm() +
                         (f.row(1) - bank.centers.row(1)).squaredNorm();
  const double ref = oracle::cross_entropy(f * W, y) + 0.5 / 2 * penalty;
  CHECK(center_loss(oracle::tensor(f), y, head, bank).item() == doctest::Approx(ref).epsilon(1e-14));
}

TEST_CASE("center term is invariant to batch order") {
  std::mt19937_64 rng(3);
  auto bank = CenterBank<double>::zeros(4, 3, 0.01, 0.5);
  bank.centers = oracle::gaussian(4, 3, rng);
  MatrixXd f = oracle::gaussian(8, 3, rng);
  auto y = labels(8, 4, rng);
  const double base = center_penalty(oracle::tensor(f), y, bank).item();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> p(8);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    MatrixXd fp(8, 3);
    std::vector<int> yp(8);
    for (int i = 0; i < 8; ++i) {
      fp.row(i) = f.row(p[static_cast<std::size_t>(i)]);
      yp[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(p[static_cast<std::size_t>(i)])];
    }
    CHECK(center_penalty(oracle::tensor(fp), yp, bank).item() == doctest::Approx(base).epsilon(1e-13));
  }
}

TEST_CASE("step_centers examples") {
  auto bank = CenterBank<double>::zeros(3, 2, 0.001, 1.0);
  bank.centers << 1, 1, 2, 2, 3, 3;
  MatrixXd f(1, 2);
  f << 5, -1;
  const std::vector<int> y = {1};
  step_centers(bank, oracle::tensor(f), y);
  CHECK(bank.centers(0, 0) == 1);
  CHECK(bank.centers(2, 1) == 3);
  CHECK(bank.centers(1, 0) == doctest::Approx((2 + 5) / 2.0));
  CHECK(bank.centers(1, 1) == doctest::Approx((2 - 1) / 2.0));
}

TEST_CASE("step_centers matches the loop oracle on a mixed batch") {
  std::mt19937_64 rng(4);
  auto bank = CenterBank<double>::zeros(4, 3, 0.001, 0.5);
  bank.centers = oracle::gaussian(4, 3, rng);
  const MatrixXd before = bank.centers;
  MatrixXd f = oracle::gaussian(9, 3, rng);
  const std::vector<int> y = {0, 2, 2, 0, 2, 1, 0, 2, 1};
  step_centers(bank, oracle::tensor(f), y);
  for (int j = 0; j < 4; ++j) {
    Eigen::RowVectorXd delta = Eigen::RowVectorXd::Zero(3);
    int n = 0;
    for (int i = 0; i < 9; ++i)
      if (y[static_cast<std::size_t>(i)] == j) {
        delta += before.row(j) - f.row(i);
        ++n;
      }
    const Eigen::RowVectorXd expect = before.row(j) - 0.5 * delta / (1.0 + n);
    CHECK((bank.centers.row(j) - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("phi boundary values and segment stitching") {
  for (int m = 1; m <= 4; ++m) {
    CHECK(phi(0.0, m) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(phi(std::numbers::pi, m) == doctest::Approx(1.0 - 2 * m).epsilon(1e-12));
    for (int k = 1; k < m; ++k) {
      const double at = k * std::numbers::pi / m;
      CHECK(phi(at, m) == doctest::Approx(1.0 - 2 * k).epsilon(1e-12));
      CHECK(phi(std::nextafter(at, 10.0), m) == doctest::Approx(1.0 - 2 * k).epsilon(1e-9));
    }
  }
}

TEST_CASE("phi equals the literal oracle and is decreasing below cos on a grid") {
  const int n = 10000;
  for (int m = 1; m <= 4; ++m) {
    double prev = phi(0.0, m);
    for (int i = 1; i <= n; ++i) {
      const double th = std::numbers::pi * i / n;
      const double v = phi(th, m);
      CHECK(std::abs(v - oracle::phi(th, m)) < 1e-12);
      REQUIRE(v < prev);
      prev = v;
      if (m >= 2) {
        REQUIRE(v < std::cos(th));
      } else {
        REQUIRE(std::abs(v - std::cos(th)) < 1e-15);
      }
    }
  }
}

TEST_CASE("a-softmax with m = 1 is softmax on the normalised bias-free head") {
  std::mt19937_64 rng(5);
  MatrixXd f = oracle::gaussian(7, 5, rng);
  MatrixXd W = unit_columns(oracle::gaussian(5, 4, rng));
  auto y = labels(7, 4, rng);
  auto head = head_of(W, VectorXd::Zero(4));
  MarginConfig cfg;
  cfg.m = 1;
  const double a = asoftmax_loss(oracle::tensor(f), y, head, cfg).item();
  const double s = softmax_loss(oracle::tensor(f), y, head).item();
  CHECK(std::abs(a - s) < 1e-6);
}

TEST_CASE("a-softmax matches the arccos oracle for every margin") {
  std::mt19937_64 rng(6);
  for (int m = 1; m <= 4; ++m) {
    for (double lambda : {0.0, 5.0, 1000.0}) {
      MatrixXd f = oracle::gaussian(6, 5, rng);
      MatrixXd W = unit_columns(oracle::gaussian(5, 3, rng));
      auto y = labels(6, 3, rng);
      MarginConfig cfg;
      cfg.m = m;
      const double got = asoftmax_loss(oracle::tensor(f), y, head_of(W, VectorXd::Zero(3)), cfg, lambda).item();
      CHECK(std::abs(got - oracle::asoftmax(f, W, y, m, lambda)) < 1e-10 * std::max(1.0, std::abs(got)));
    }
  }
}

TEST_CASE("a-softmax m = 4 gradients match the literal oracle by finite differences") {
  std::mt19937_64 rng(7);
  MatrixXd f = oracle::gaussian(5, 4, rng);
  MatrixXd W = unit_columns(oracle::gaussian(4, 3, rng));
  const std::vector<int> y = {0, 2, 1, 1, 0};
  auto tf = oracle::tensor(f, true);
  auto head = head_of(W, VectorXd::Zero(3));
  MarginConfig cfg;
  GradTape<double>::current().reset();
  asoftmax_loss(tf, y, head, cfg).backward();
  GradTape<double>::current().reset();
  const double h = 1e-6;
  double worst = 0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    MatrixXd up = f, down = f;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double fd = (oracle::asoftmax(up, W, y, 4) - oracle::asoftmax(down, W, y, 4)) / (2 * h);
    // tensor storage is row-major, Eigen's is column-major
    const Eigen::Index r = i % f.rows(), c = i / f.rows();
    const double ad = tf.grad()(r * f.cols() + c);
    worst = std::max(worst, std::abs(ad - fd) / std::max(std::abs(fd), 1e-8));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("a-softmax with a margin never undercuts the modified softmax") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    MatrixXd f = oracle::gaussian(4, 6, rng);
    MatrixXd W = unit_columns(oracle::gaussian(6, 5, rng));
    auto y = labels(4, 5, rng);
    auto head = head_of(W, VectorXd::Zero(5));
    MarginConfig plain;
    plain.m = 1;
    const double base = asoftmax_loss(oracle::tensor(f), y, head, plain).item();
    for (int m = 2; m <= 4; ++m) {
      MarginConfig cfg;
      cfg.m = m;
      REQUIRE(asoftmax_loss(oracle::tensor(f), y, head, cfg).item() >= base);
    }
  }
}

TEST_CASE("a-softmax rejects zero-norm embeddings") {
  auto head = head_of(unit_columns(MatrixXd::Random(3, 2)), VectorXd::Zero(2));
  const std::vector<int> y = {0, 1};
  MatrixXd f = MatrixXd::Random(2, 3);
  f.row(1).setZero();
  CHECK_THROWS_AS(asoftmax_loss(oracle::tensor(f), y, head, MarginConfig{}), DegenerateInputError);
}

TEST_CASE("margin config validation and annealing schedule") {
  MarginConfig cfg;
  cfg.m = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.m = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.m = 4;
  CHECK(cfg.lambda_at(10) == 0.0);
  cfg.anneal = true;
  CHECK(cfg.lambda_at(0) == 1000.0);
  CHECK(cfg.lambda_at(1) == doctest::Approx(950.0));
  CHECK(cfg.lambda_at(100000) == 5.0);
}

TEST_CASE("head normalisation keeps columns unit-length and the bias zero") {
  std::mt19937_64 rng(9);
  auto head = ClassifierHead<double>::init(6, 4, rng);
  head.bias.mutable_value().setConstant(0.3);
  head.normalize_columns();
  for (Index j = 0; j < 4; ++j) {
    double n = 0;
    for (Index i = 0; i < 6; ++i) n += head.weight[i * 4 + j] * head.weight[i * 4 + j];
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK((head.bias.value() == 0).all());
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(10);
  auto f = oracle::tensor(oracle::gaussian(6, 5, rng), true);
  auto head = head_of(oracle::gaussian(5, 4, rng), oracle::gaussian(4, 1, rng));
  auto bank = CenterBank<double>::zeros(4, 5, 0.001, 0.5);
  bank.centers = oracle::gaussian(4, 5, rng);
  auto y = labels(6, 4, rng);
  CHECK(check_gradients<double>("softmax", [&] { return softmax_loss(f, y, head); },
                                {f, head.weight, head.bias})
            .passed());
  CHECK(check_gradients<double>("center", [&] { return center_loss(f, y, head, bank); },
                                {f, head.weight, head.bias})
            .passed());
  bank.lambda = 0.5;
  CHECK(check_gradients<double>("center 0.5", [&] { return center_loss(f, y, head, bank); }, {f})
            .passed());
}
