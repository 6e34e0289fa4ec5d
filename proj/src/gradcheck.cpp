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

#include "uttenc/gradcheck.hpp"

#include <numbers>

#include "uttenc/model.hpp"

namespace uttenc {

namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  ArrayX<double> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return T(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed random weights, so every output entry matters.
T probe(const T& out, const T& weights) { return sum_all(mul(out, weights)); }

T probe_weights(const T& sample, std::mt19937_64& rng) {
  auto w = random_tensor(sample.shape(), rng);
  w.set_requires_grad(false);
  return w;
}

std::vector<int> random_labels(Index n, Index classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, static_cast<int>(classes) - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& y : out) y = dist(rng);
  return out;
}

// Distance of the true-class angle of any row to the nearest segment
// boundary k pi / m, in units of pi / m.
double boundary_gap(const T& f, const T& w, std::span<const int> labels, int m) {
  NoGradGuard guard;
  const auto cos = cosine_matrix(f, w).matrix();
  double gap = 1.0;
  for (Index i = 0; i < cos.rows(); ++i) {
    const double theta = std::acos(cos(i, labels[static_cast<std::size_t>(i)]));
    const double s = theta * m / std::numbers::pi;
    gap = std::min(gap, std::abs(s - std::round(s)));
  }
  return gap;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradCheckOptions opts;
  opts.seed = seed;
  std::vector<GradCheckResult> out;

  {
    auto a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
    auto w = probe_weights(matmul(a, b), rng);
    out.push_back(check_gradients<double>("matmul", [&] { return probe(matmul(a, b), w); },
                                          {a, b}, opts));
  }
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
    auto pos = T({3, 4}, random_tensor({3, 4}, rng).value().abs() + 0.5, true);
    auto f = [&] {
      return add(add(mul(tanh(a), b), div(exp(scale(a, 0.3)), pos)), add(log(pos), square(sub(a, b))));
    };
    auto w = probe_weights(f(), rng);
    out.push_back(check_gradients<double>("elementwise", [&] { return probe(f(), w); }, {a, b, pos},
                                          opts));
  }
  {
    auto a = random_tensor({2, 3, 5}, rng);
    auto f = [&] {
      return add(add(sum(a, 1, true), mean(a, 1, true)),
                 add(add(max(a, 1, true), log_softmax(a, 1)),
                     add(softmax(a, 2), l2norm(a, 2, true))));
    };
    auto w = probe_weights(f(), rng);
    out.push_back(check_gradients<double>("reductions", [&] { return probe(f(), w); }, {a}, opts));
  }
  {
    auto a = random_tensor({2, 3, 4}, rng);
    auto f = [&] { return transpose(reshape(permute(a, {2, 0, 1}), {8, 3})); };
    auto w = probe_weights(f(), rng);
    out.push_back(check_gradients<double>("reshape/permute", [&] { return probe(f(), w); }, {a},
                                          opts));
  }
  for (Index stride : {1, 2}) {
    auto x = random_tensor({2, 3, 7, 6}, rng);
    auto k = random_tensor({4, 3, 3, 3}, rng, 0.5);
    const Conv2dGeometry g{3, stride, 1};
    auto w = probe_weights(conv2d(x, k, g), rng);
    out.push_back(check_gradients<double>("conv2d stride " + std::to_string(stride),
                                          [&] { return probe(conv2d(x, k, g), w); }, {x, k}, opts));
  }
  {
    auto x = random_tensor({3, 4, 5, 2}, rng);
    auto gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng);
    BatchNormState<double> st(4);
    auto f = [&] {
      auto state = st;  // keep running statistics fixed across evaluations
      return batch_norm(x, gamma, beta, state, NormMode::kTrain);
    };
    auto w = probe_weights(f(), rng);
    out.push_back(check_gradients<double>("batch_norm", [&] { return probe(f(), w); },
                                          {x, gamma, beta}, opts));
  }
  {
    auto x = random_tensor({3, 6, 9}, rng);
    auto w = probe_weights(tap(x), rng);
    out.push_back(check_gradients<double>("tap", [&] { return probe(tap(x), w); }, {x}, opts));
  }
  {
    auto x = random_tensor({3, 6, 9}, rng);
    SapParams<double> p{random_tensor({5, 6}, rng, 0.5), random_tensor({5}, rng, 0.5),
                        random_tensor({5}, rng)};
    auto w = probe_weights(sap(x, p), rng);
    out.push_back(check_gradients<double>("sap", [&] { return probe(sap(x, p), w); },
                                          {x, p.weight, p.bias, p.context}, opts));
  }
  for (auto agg : {LdeAggregation::kFrameMean, LdeAggregation::kWeightNormalized}) {
    auto x = random_tensor({3, 6, 9}, rng);
    LdeParams<double> p{random_tensor({4, 6}, rng), random_tensor({4}, rng, 0.05)};
    p.smoothing.mutable_value() = p.smoothing.value().abs() + 0.05;
    auto w = probe_weights(lde(x, p, agg), rng);
    out.push_back(check_gradients<double>(
        agg == LdeAggregation::kFrameMean ? "lde" : "lde weight-normalized",
        [&] { return probe(lde(x, p, agg), w); }, {x, p.centers, p.smoothing}, opts));
  }
  {
    auto f = random_tensor({6, 5}, rng);
    ClassifierHead<double> head{random_tensor({5, 4}, rng), random_tensor({4}, rng)};
    const auto y = random_labels(6, 4, rng);
    out.push_back(check_gradients<double>("softmax loss",
                                          [&] { return softmax_loss(f, y, head); },
                                          {f, head.weight, head.bias}, opts));
  }
  {
    auto f = random_tensor({6, 5}, rng);
    ClassifierHead<double> head{random_tensor({5, 4}, rng), random_tensor({4}, rng)};
    auto bank = CenterBank<double>::zeros(4, 5, 0.001, 0.5);
    bank.centers = RowMatrix<double>::Random(4, 5);
    const auto y = random_labels(6, 4, rng);
    out.push_back(check_gradients<double>("center loss lambda 0.001",
                                          [&] { return center_loss(f, y, head, bank); },
                                          {f, head.weight, head.bias}, opts));
  }
  for (int m = 1; m <= 4; ++m) {
    for (double lambda : {0.0, 5.0}) {
      if (lambda > 0 && m != 4) continue;
      T f, weight;
      std::vector<int> y;
      do {
        f = random_tensor({6, 5}, rng);
        weight = random_tensor({5, 4}, rng);
        y = random_labels(6, 4, rng);
      } while (boundary_gap(f, weight, y, m) < 0.02);
      ClassifierHead<double> head{weight, T::zeros({4})};
      MarginConfig cfg;
      cfg.m = m;
      std::string name = "a-softmax m=" + std::to_string(m);
      if (lambda > 0) name += " lambda=5";
      out.push_back(check_gradients<double>(
          name, [&] { return asoftmax_loss(f, y, head, cfg, lambda); }, {f, head.weight}, opts));
    }
  }
  {
    ModelConfig cfg;
    cfg.frontend.base_channels = 2;
    cfg.frontend.blocks_per_stage = {1, 1, 1, 1};
    cfg.frontend.input_mels = 16;
    cfg.encoder = EncoderKind::kLde;
    cfg.lde_components = 3;
    cfg.embedding_dim = 6;
    cfg.num_classes = 3;
    Model<double> model(cfg, seed);
    auto x = random_tensor({3, 1, 16, 16}, rng);
    x.set_requires_grad(false);
    const auto y = random_labels(3, 3, rng);
    auto set = model.parameters();
    std::vector<T> params;
    for (const auto& p : set.params) params.push_back(p.tensor);
    auto bn = set.buffers;
    std::vector<ArrayX<double>> saved;
    for (const auto& b : bn) saved.push_back(Eigen::Map<const ArrayX<double>>(b.data, numel(b.shape)));
    auto f = [&] {
      auto loss = model.loss(model.embed(x, NormMode::kTrain), y);
      for (std::size_t i = 0; i < bn.size(); ++i)
        Eigen::Map<ArrayX<double>>(bn[i].data, numel(bn[i].shape)) = saved[i];
      return loss;
    };
    GradCheckOptions small = opts;
    small.max_entries = 6;
    out.push_back(check_gradients<double>("end-to-end lde/softmax", f, params, small));
  }
  return out;
}

}  // namespace uttenc
