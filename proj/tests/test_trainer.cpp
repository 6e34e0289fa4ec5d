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


#include <cmath>
#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "uttenc/config.hpp"
#include "uttenc/trainer.hpp"

using namespace uttenc;

namespace {

ParameterSet<double> single(const ArrayX<double>& init, bool decay = false) {
  ParameterSet<double> set;
  set.add("p", Tensor<double>({init.size()}, init, true), decay);
  return set;
}

// Leaves d/dp of 0.5 * |p|^2, which is p itself, in the gradient.
void quadratic_grad(ParameterSet<double>& set) {
  auto& p = set.params[0].tensor;
  p.zero_grad();
  scale(sum_all(square(p)), 0.5).backward();
  GradTape<double>::current().reset();
}

std::vector<FrameSequence> tiny_corpus(int n, int dims, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<FrameSequence> out;
  for (int i = 0; i < n; ++i) {
    FrameSequence s;
    s.features = oracle::gaussian(dims, frames + i, rng);
    s.utterance_id = "u" + std::to_string(i);
    s.label = i % 2;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("sgd leaves parameters alone under a zero gradient") {
  ArrayX<double> init(3);
  init << 1.0, -2.0, 0.5;
  auto set = single(init);
  set.params[0].tensor.zero_grad();
  OptimizerState<double> st;
  sgd_step(set, st, {0.1, 0.9, 0.0});
  CHECK((set.params[0].tensor.value() == init).all());
}

TEST_CASE("sgd single step example") {
  ArrayX<double> init = ArrayX<double>::Ones(1);
  auto set = single(init);
  set.params[0].tensor.zero_grad();
  sum_all(set.params[0].tensor).backward();
  GradTape<double>::current().reset();
  OptimizerState<double> st;
  sgd_step(set, st, {0.1, 0.9, 0.0});
  CHECK(set.params[0].tensor.value()(0) == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("sgd with momentum and decay follows the hand recurrence on a quadratic") {
  const double lr = 0.1, mu = 0.9, wd = 0.01;
  ArrayX<double> init(2);
  init << 1.0, -3.0;
  auto set = single(init, true);
  OptimizerState<double> st;
  ArrayX<double> p = init, v = ArrayX<double>::Zero(2);
  for (int step = 0; step < 3; ++step) {
    quadratic_grad(set);
    sgd_step(set, st, {lr, mu, wd});
    v = mu * v + (p + wd * p);
    p = p - lr * v;
    CHECK(((set.params[0].tensor.value() - p).abs() < 1e-15).all());
  }
}

TEST_CASE("sgd without momentum or decay is plain gradient descent") {
  ArrayX<double> init(2);
  init << 2.0, 4.0;
  auto set = single(init, true);
  OptimizerState<double> st;
  ArrayX<double> p = init;
  for (int step = 0; step < 4; ++step) {
    quadratic_grad(set);
    sgd_step(set, st, {0.25, 0.0, 0.0});
    p = p - 0.25 * p;
    CHECK(((set.params[0].tensor.value() - p).abs() < 1e-15).all());
  }
}

TEST_CASE("weight decay only touches flagged parameters") {
  ParameterSet<double> set;
  set.add("w", Tensor<double>({1}, ArrayX<double>::Ones(1), true), true);
  set.add("b", Tensor<double>({1}, ArrayX<double>::Ones(1), true), false);
  for (auto& p : set.params) p.tensor.zero_grad();
  OptimizerState<double> st;
  sgd_step(set, st, {1.0, 0.0, 0.5});
  CHECK(set.params[0].tensor.value()(0) == doctest::Approx(0.5));
  CHECK(set.params[1].tensor.value()(0) == 1.0);
}

TEST_CASE("a non-finite gradient names the parameter") {
  ParameterSet<double> set;
  set.add("encoder.sap.weight", Tensor<double>({2}, ArrayX<double>::Ones(2), true), true);
  ArrayX<double> c(2);
  c << 1.0, std::numeric_limits<double>::quiet_NaN();
  auto& p = set.params[0].tensor;
  p.zero_grad();
  sum_all(mul(p, Tensor<double>({2}, c))).backward();
  GradTape<double>::current().reset();
  OptimizerState<double> st;
  try {
    sgd_step(set, st, {});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("encoder.sap.weight") != std::string::npos);
  }
}

TEST_CASE("make_batch shares one crop length and is deterministic") {
  auto corpus = tiny_corpus(6, 4, 20, 1);
  std::vector<std::size_t> idx = {0, 3, 5};
  std::mt19937_64 rng(9);
  auto b = make_batch(corpus, idx, {300, 300}, rng);
  CHECK(b.length == 300);
  CHECK(b.size() == 3);
  CHECK(b.labels == std::vector<int>{0, 1, 1});
  CHECK(b.data.size() == 3 * 4 * 300);

  std::mt19937_64 r1(5), r2(5);
  for (int i = 0; i < 10; ++i) {
    auto x = make_batch(corpus, idx, {8, 30}, r1);
    auto y = make_batch(corpus, idx, {8, 30}, r2);
    CHECK(x.length == y.length);
    CHECK((x.data == y.data).all());
  }
  std::vector<std::size_t> none;
  CHECK_THROWS_AS(make_batch(corpus, none, {8, 8}, r1), EmptyInputError);
}

TEST_CASE("crop lengths are uniform on [300, 800]") {
  auto corpus = tiny_corpus(1, 2, 40, 2);
  std::vector<std::size_t> idx = {0};
  std::mt19937_64 rng(11);
  const int lo = 300, hi = 800, draws = 10000;
  std::vector<int> counts(hi - lo + 1, 0);
  for (int i = 0; i < draws; ++i) {
    const auto b = make_batch(corpus, idx, {lo, hi}, rng);
    REQUIRE(b.length >= lo);
    REQUIRE(b.length <= hi);
    ++counts[static_cast<std::size_t>(b.length - lo)];
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(counts.size());
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double p = oracle::chi_square_pvalue(chi2, static_cast<double>(counts.size() - 1));
  CHECK(p > 0.01);
}

TEST_CASE("epoch batches partition the corpus and never end in a batch of one") {
  std::mt19937_64 rng(3);
  for (std::size_t n : {2u, 5u, 32u, 33u, 65u, 100u}) {
    auto batches = epoch_batches(n, 32, rng);
    std::vector<int> seen(n, 0);
    for (const auto& b : batches) {
      CHECK(b.size() >= 2);
      for (auto i : b) ++seen[i];
    }
    for (int s : seen) CHECK(s == 1);
  }
  CHECK(epoch_batches(33, 32, rng).size() == 1);
  CHECK(epoch_batches(34, 32, rng).size() == 2);
}

TEST_CASE("plateau rule moves through the learning-rate stages") {
  TrainConfig cfg;
  cfg.lr_stages = {0.1, 0.01};
  OptimizerState<double> st;
  CHECK_FALSE(update_schedule(st, 10.0, cfg));
  CHECK_FALSE(update_schedule(st, 5.0, cfg));
  CHECK_FALSE(update_schedule(st, 4.99, cfg));
  CHECK_FALSE(update_schedule(st, 4.98, cfg));
  CHECK(update_schedule(st, 4.97, cfg));
  CHECK(st.stage == 1);
  for (int i = 0; i < 10; ++i) CHECK_FALSE(update_schedule(st, 4.97, cfg));
  CHECK(st.stage == 1);

  OptimizerState<double> st2;
  update_schedule(st2, 10.0, cfg);
  update_schedule(st2, 9.99, cfg);
  update_schedule(st2, 9.98, cfg);
  update_schedule(st2, 5.0, cfg);  // a real improvement resets the count
  CHECK(st2.stalled_epochs == 0);
  CHECK(st2.stage == 0);
}

TEST_CASE("log rows follow the header") {
  EpochRecord r;
  r.epoch = 3;
  r.step = 12;
  r.lr = 0.01;
  r.loss = 1.5;
  r.train_acc = 0.25;
  const auto row = format_log_row(r);
  CHECK(std::count(row.begin(), row.end(), ',') == 5);
  CHECK(row.rfind("3,12,", 0) == 0);
}

TEST_CASE("fixed-batch loss strictly decreases over five steps for every combination") {
  SynthOptions so;
  so.n_classes = 4;
  so.utts_per_class = 4;
  so.seed = 21;
  const auto corpus = synth_corpus(so);
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(0);
  const auto batch = make_batch(corpus, idx, {64, 64}, rng);

  for (auto enc : {EncoderKind::kTap, EncoderKind::kSap, EncoderKind::kLde}) {
    for (auto loss : {LossKind::kSoftmax, LossKind::kCenter, LossKind::kASoftmax}) {
      ModelConfig mc = RunConfig().model;  // training defaults, annealing included
      mc.frontend.width_multiplier = 0.25;
      mc.encoder = enc;
      mc.loss = loss;
      mc.lde_components = 8;
      mc.num_classes = so.n_classes;
      Model<double> model(mc, 4);
      auto params = model.parameters();
      OptimizerState<double> st;
      std::vector<double> losses;
      for (int step = 0; step < 6; ++step)
        losses.push_back(
            train_step(model, params, st, batch, {1e-3, 0.9, 1e-4}, mc.margin.lambda_at(step)).first);
      INFO(to_string(enc), "-", to_string(loss));
      for (int s = 1; s < 6; ++s) CHECK(losses[s] < losses[s - 1]);
    }
  }
}

TEST_CASE("training is bit-identical across runs at 64-bit") {
  SynthOptions so;
  so.n_classes = 3;
  so.utts_per_class = 6;
  so.seed = 5;
  const auto corpus = synth_corpus(so);
  ModelConfig mc;
  mc.frontend.width_multiplier = 0.25;
  mc.num_classes = 3;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.crop_range = {32, 48};
  auto run = [&] {
    Model<double> model(mc, 1);
    return train(model, std::span<const FrameSequence>(corpus), tc);
  };
  const auto a = run(), b = run();
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].train_acc == b.log[i].train_acc);
    CHECK(a.log[i].step == b.log[i].step);
  }
}

TEST_CASE("train validates its corpus") {
  ModelConfig mc;
  mc.frontend.width_multiplier = 0.25;
  mc.num_classes = 2;
  Model<double> model(mc, 0);
  TrainConfig tc;
  tc.crop_range = {16, 16};
  auto corpus = tiny_corpus(4, 64, 20, 3);
  for (auto& s : corpus) s.label = 0;
  CHECK_THROWS_AS(train(model, std::span<const FrameSequence>(corpus), tc), DataError);
  corpus[1].label = 5;
  CHECK_THROWS_AS(train(model, std::span<const FrameSequence>(corpus), tc), DataError);
}
