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

// Residual CNN front end.
//
//   layer    output (freq x time)   channels   blocks
//   conv1    F x L                  c          -
//   res1     F x L                  c          b1
//   res2     F/2 x L/2              2c         b2     stride 2
//   res3     F/4 x L/4              4c         b3     stride 2
//   res4     F/8 x L/8              8c         b4     stride 2
//   avgpool  1 x L/8                8c         -
//
// with c = base_channels * width_multiplier. The result is reshaped to
// (8c) x (L/8) per utterance. Odd extents round up at each stride.

#ifndef UTTENC_FRONTEND_HPP_
#define UTTENC_FRONTEND_HPP_

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uttenc/conv.hpp"
#include "uttenc/module.hpp"

namespace uttenc {

struct FrontendConfig {
  Index base_channels = 16;
  std::array<Index, 4> blocks_per_stage = {3, 4, 6, 3};
  Index input_mels = 64;
  double width_multiplier = 1.0;

  void validate() const;
  Index stage_channels(int stage) const;
  Index output_channels() const { return stage_channels(3); }
};

template <typename Scalar>
struct ConvBn {
  Tensor<Scalar> weight;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  BatchNormState<Scalar> stats;
  Conv2dGeometry geom;

  static ConvBn init(Index in, Index out, Conv2dGeometry geom, std::mt19937_64& rng) {
    const Index fan_in = in * geom.kernel * geom.kernel;
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    ArrayX<Scalar> w(out * fan_in);
    for (Index i = 0; i < w.size(); ++i) w(i) = static_cast<Scalar>(he(rng));
    return {Tensor<Scalar>({out, in, geom.kernel, geom.kernel}, std::move(w), true),
            Tensor<Scalar>::full({out}, Scalar(1), true),
            Tensor<Scalar>::zeros({out}, true), BatchNormState<Scalar>(out), geom};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, NormMode mode) {
    return batch_norm(conv2d(x, weight, geom), gamma, beta, stats, mode);
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    set.add(prefix + ".weight", weight, true);
    set.add(prefix + ".gamma", gamma, false);
    set.add(prefix + ".beta", beta, false);
    set.add_buffer(prefix + ".running_mean", stats.running_mean);
    set.add_buffer(prefix + ".running_var", stats.running_var);
  }
};

/// Two 3x3 conv + batch-norm layers with a shortcut. Downsampling blocks
/// stride the first conv and project the shortcut with a strided 1x1 conv.
template <typename Scalar>
struct ResidualBlock {
  ConvBn<Scalar> first;
  ConvBn<Scalar> second;
  bool projected = false;
  ConvBn<Scalar> shortcut;

  static ResidualBlock init(Index in, Index out, Index stride, std::mt19937_64& rng) {
    ResidualBlock b;
    b.first = ConvBn<Scalar>::init(in, out, {3, stride, 1}, rng);
    b.second = ConvBn<Scalar>::init(out, out, {3, 1, 1}, rng);
    b.projected = stride != 1 || in != out;
    if (b.projected) b.shortcut = ConvBn<Scalar>::init(in, out, {1, stride, 0}, rng);
    return b;
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, NormMode mode) {
    auto y = second(relu(first(x, mode)), mode);
    auto skip = projected ? shortcut(x, mode) : x;
    if (y.shape() != skip.shape()) {
      throw DimensionError("residual block: branch " + to_string(y.shape()) +
                           " vs shortcut " + to_string(skip.shape()));
    }
    return relu(add(y, skip));
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    first.collect(set, prefix + ".conv1");
    second.collect(set, prefix + ".conv2");
    if (projected) shortcut.collect(set, prefix + ".proj");
  }
};

template <typename Scalar>
class Frontend {
 public:
  using Trace = std::vector<std::pair<std::string, Shape>>;

  Frontend() = default;
  Frontend(const FrontendConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    stem_ = ConvBn<Scalar>::init(1, cfg.stage_channels(0), {3, 1, 1}, rng);
    Index in = cfg.stage_channels(0);
    for (int s = 0; s < 4; ++s) {
      const Index out = cfg.stage_channels(s);
      std::vector<ResidualBlock<Scalar>> blocks;
      for (Index b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(s)]; ++b) {
        const Index stride = (s > 0 && b == 0) ? 2 : 1;
        blocks.push_back(ResidualBlock<Scalar>::init(b == 0 ? in : out, out, stride, rng));
      }
      stages_[static_cast<std::size_t>(s)] = std::move(blocks);
      in = out;
    }
  }

  const FrontendConfig& config() const { return cfg_; }
  Index output_channels() const { return cfg_.output_channels(); }

  /// Output time extent for an input of `frames` frames (ceil(frames / 8)).
  static Index output_frames(Index frames) {
    for (int i = 0; i < 3; ++i) frames = (frames + 1) / 2;
    return frames;
  }

  /// Maps an N x 1 x F x L batch to N x D x ceil(L/8). When `trace` is given
  /// the per-utterance (channels x freq x time) signature of each stage is
  /// appended to it.
  Tensor<Scalar> forward(const Tensor<Scalar>& x, NormMode mode, Trace* trace = nullptr) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.input_mels) {
      throw DimensionError("frontend expects N x 1 x " + std::to_string(cfg_.input_mels) +
                           " x L input, got " + to_string(x.shape()));
    }
    if (x.dim(3) < 8) {
      throw DimensionError("frontend needs at least 8 frames, got " +
                           std::to_string(x.dim(3)));
    }
    auto record = [&](const char* name, const Tensor<Scalar>& t) {
      if (trace) trace->emplace_back(name, Shape(t.shape().begin() + 1, t.shape().end()));
    };
    auto h = relu(stem_(x, mode));
    record("conv1", h);
    static constexpr const char* kNames[] = {"res1", "res2", "res3", "res4"};
    for (std::size_t s = 0; s < 4; ++s) {
      for (auto& block : stages_[s]) h = block(h, mode);
      record(kNames[s], h);
    }
    h = mean(h, 2, true);
    record("avgpool", h);
    auto out = reshape(h, {h.dim(0), h.dim(1), h.dim(3)});
    record("reshape", out);
    return out;
  }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix) {
    stem_.collect(set, prefix + ".conv1");
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect(set, prefix + ".res" + std::to_string(s + 1) + "." +
                                       std::to_string(b));
  }

 private:
  FrontendConfig cfg_;
  ConvBn<Scalar> stem_;
  std::array<std::vector<ResidualBlock<Scalar>>, 4> stages_;
};

}  // namespace uttenc

#endif  // UTTENC_FRONTEND_HPP_
