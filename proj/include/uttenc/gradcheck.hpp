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

// Central finite-difference checks of reverse-mode gradients.

#ifndef UTTENC_GRADCHECK_HPP_
#define UTTENC_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uttenc/tensor.hpp"

namespace uttenc {

struct GradCheckOptions {
  double step = 1e-5;
  double floor = 1e-8;     // denominator floor of the relative error
  Index max_entries = 48;  // per input; larger inputs are subsampled
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Index entries = 0;
  double tolerance = 1e-4;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Compares d loss / d input from backward() with central differences
/// (L(x + h) - L(x - h)) / 2h for a sample of entries of every input. The
/// relative error of an entry is |g_ad - g_fd| / max(|g_fd|, floor).
template <typename Scalar>
GradCheckResult check_gradients(const std::string& name,
                                const std::function<Tensor<Scalar>()>& loss_fn,
                                std::vector<Tensor<Scalar>> inputs,
                                const GradCheckOptions& opts = {}) {
  auto& tape = GradTape<Scalar>::current();
  tape.reset();
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  loss_fn().backward();
  tape.reset();

  GradCheckResult res;
  res.name = name;
  std::mt19937_64 rng(opts.seed);
  NoGradGuard guard;
  for (auto& t : inputs) {
    const ArrayX<Scalar> analytic = t.grad();
    std::vector<Index> idx(static_cast<std::size_t>(t.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (t.size() > opts.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(opts.max_entries));
    }
    for (Index i : idx) {
      auto& v = t.mutable_value();
      const Scalar saved = v(i);
      v(i) = saved + static_cast<Scalar>(opts.step);
      const double up = static_cast<double>(loss_fn().item());
      v(i) = saved - static_cast<Scalar>(opts.step);
      const double down = static_cast<double>(loss_fn().item());
      v(i) = saved;
      const double fd = (up - down) / (2.0 * opts.step);
      const double ad = static_cast<double>(analytic(i));
      const double abs_err = std::abs(ad - fd);
      const double denom = std::max(std::abs(fd), opts.floor);
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
      ++res.entries;
    }
  }
  return res;
}

/// The full 64-bit suite: primitive ops, conv, batch norm, the three
/// encoders, the three losses (A-Softmax for m = 1..4) and a small
/// end-to-end model.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 0);

}  // namespace uttenc

#endif  // UTTENC_GRADCHECK_HPP_
