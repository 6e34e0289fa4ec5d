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

// Mini-batch SGD with momentum, staged learning rate and random cropping.

#ifndef UTTENC_TRAINER_HPP_
#define UTTENC_TRAINER_HPP_

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uttenc/config.hpp"
#include "uttenc/features.hpp"
#include "uttenc/model.hpp"

namespace uttenc {

/// A rectangular batch: every utterance cropped or tiled to `length` frames.
struct Batch {
  Index length = 0;
  Index dims = 0;
  std::vector<int> labels;
  ArrayX<double> data;  // M x 1 x dims x length, row-major

  Index size() const { return static_cast<Index>(labels.size()); }

  template <typename Scalar>
  Tensor<Scalar> input() const {
    return Tensor<Scalar>({size(), 1, dims, length}, data.cast<Scalar>());
  }
};

/// Crop length for one step, uniform on [range[0], range[1]].
inline int draw_crop_length(const std::array<int, 2>& range, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(range[0], range[1])(rng);
}

/// Packs `indices` of `corpus` into a batch sharing one random crop length.
inline Batch make_batch(std::span<const FrameSequence> corpus, std::span<const std::size_t> indices,
                        const std::array<int, 2>& crop_range, std::mt19937_64& rng) {
  if (corpus.empty() || indices.empty()) throw EmptyInputError("make_batch: empty corpus");
  Batch b;
  b.length = draw_crop_length(crop_range, rng);
  b.dims = corpus[indices[0]].dims();
  b.data.resize(static_cast<Index>(indices.size()) * b.dims * b.length);
  Index offset = 0;
  for (std::size_t i : indices) {
    const auto& seq = corpus[i];
    if (seq.dims() != b.dims) throw DataError("make_batch: mixed feature dimensions");
    if (!seq.label) throw DataError("make_batch: utterance " + seq.utterance_id + " has no label");
    const auto crop = crop_or_extend(seq, static_cast<int>(b.length), rng);
    RowMatrix<double> rows = crop.features;
    b.data.segment(offset, rows.size()) = Eigen::Map<const ArrayX<double>>(rows.data(), rows.size());
    offset += rows.size();
    b.labels.push_back(*seq.label);
  }
  return b;
}

/// Shuffled partition of 0..n-1 into batches of `batch_size`. A trailing
/// batch of one is merged into its predecessor so batch norm stays defined.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, Index batch_size,
                                                           std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto bs = static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += bs)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  if (out.size() > 1 && out.back().size() < 2) {
    auto tail = out.back();
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

template <typename Scalar>
struct OptimizerState {
  std::vector<ArrayX<Scalar>> velocity;
  std::size_t stage = 0;
  int stalled_epochs = 0;
  double previous_loss = std::numeric_limits<double>::quiet_NaN();
};

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// v <- momentum v + (g + wd p); p <- p - lr v. Weight decay only touches
/// parameters flagged for it. Throws NumericError on a non-finite gradient.
template <typename Scalar>
void sgd_step(ParameterSet<Scalar>& params, OptimizerState<Scalar>& state, const SgdOptions& opt) {
  if (state.velocity.size() != params.params.size()) {
    state.velocity.clear();
    for (const auto& p : params.params) state.velocity.push_back(ArrayX<Scalar>::Zero(p.tensor.size()));
  }
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    auto& p = params.params[i];
    const ArrayX<Scalar> g = p.tensor.grad();
    if (!g.allFinite()) throw NumericError("non-finite gradient in parameter " + p.name);
    auto& v = state.velocity[i];
    if (v.size() != g.size()) throw DimensionError("velocity shape mismatch for " + p.name);
    const auto mu = static_cast<Scalar>(opt.momentum);
    const auto wd = p.weight_decay ? static_cast<Scalar>(opt.weight_decay) : Scalar(0);
    v = mu * v + (g + wd * p.tensor.value());
    p.tensor.mutable_value() -= static_cast<Scalar>(opt.lr) * v;
  }
}

/// Plateau rule: after `patience` consecutive epochs whose mean loss
/// improved by less than `tolerance` relative to the previous epoch, move to
/// the next learning-rate stage. Returns true when the stage changed.
template <typename Scalar>
bool update_schedule(OptimizerState<Scalar>& state, double epoch_loss, const TrainConfig& cfg) {
  const double prev = state.previous_loss;
  state.previous_loss = epoch_loss;
  if (std::isnan(prev)) return false;
  const double rel = (prev - epoch_loss) / std::max(std::abs(prev), 1e-12);
  state.stalled_epochs = rel < cfg.plateau_tolerance ? state.stalled_epochs + 1 : 0;
  if (state.stalled_epochs >= cfg.plateau_patience && state.stage + 1 < cfg.lr_stages.size()) {
    ++state.stage;
    state.stalled_epochs = 0;
    return true;
  }
  return false;
}

struct EpochRecord {
  int epoch = 0;
  long step = 0;  // optimiser steps taken so far
  double lr = 0.0;
  double loss = 0.0;       // mean over the epoch's batches
  double train_acc = 0.0;  // running accuracy of the epoch's batches
  double wall_ms = 0.0;
};

inline constexpr const char* kTrainLogHeader = "epoch,step,lr,loss,train_acc,wall_ms";
std::string format_log_row(const EpochRecord& r);

/// Values of every parameter and buffer, used to roll back after divergence.
template <typename Scalar>
struct Snapshot {
  std::vector<ArrayX<Scalar>> params;
  std::vector<ArrayX<Scalar>> buffers;

  static Snapshot take(const ParameterSet<Scalar>& set) {
    Snapshot s;
    for (const auto& p : set.params) s.params.push_back(p.tensor.value());
    for (const auto& b : set.buffers)
      s.buffers.push_back(Eigen::Map<const ArrayX<Scalar>>(b.data, numel(b.shape)));
    return s;
  }
  void restore(ParameterSet<Scalar>& set) const {
    for (std::size_t i = 0; i < set.params.size(); ++i)
      set.params[i].tensor.mutable_value() = params[i];
    for (std::size_t i = 0; i < set.buffers.size(); ++i)
      Eigen::Map<ArrayX<Scalar>>(set.buffers[i].data, numel(set.buffers[i].shape)) = buffers[i];
  }
};

/// Thrown when the loss or a gradient stops being finite. The model has
/// already been restored to the state at the end of the last good epoch.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, int epoch) : NumericError(what), epoch_(epoch) {}
  int last_good_epoch() const { return epoch_; }

 private:
  int epoch_;
};

template <typename Scalar>
struct TrainResult {
  std::vector<EpochRecord> log;
  long steps = 0;
  bool reached_target = false;
};

/// One optimiser step on `batch`. Returns the loss and the number of
/// correctly classified utterances.
template <typename Scalar>
std::pair<double, Index> train_step(Model<Scalar>& model, ParameterSet<Scalar>& params,
                                    OptimizerState<Scalar>& state, const Batch& batch,
                                    const SgdOptions& opt, double anneal_lambda) {
  auto& tape = GradTape<Scalar>::current();
  tape.reset();
  for (auto& p : params.params) p.tensor.zero_grad();
  const auto emb = model.embed(batch.input<Scalar>(), NormMode::kTrain);
  const auto loss = model.loss(emb, batch.labels, anneal_lambda);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) throw NumericError("loss is not finite");
  loss.backward();
  tape.reset();
  sgd_step(params, state, opt);
  model.after_step(emb, batch.labels);
  const auto pred = model.predict(emb);
  Index correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  return {value, correct};
}

/// Trains `model` in place on a labelled corpus. `on_epoch` sees every log
/// record as it is produced.
template <typename Scalar>
TrainResult<Scalar> train(Model<Scalar>& model, std::span<const FrameSequence> corpus,
                          const TrainConfig& cfg,
                          const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (corpus.size() < 2) throw DataError("train: corpus needs at least two utterances");
  std::vector<bool> seen(static_cast<std::size_t>(model.config().num_classes), false);
  for (const auto& seq : corpus) {
    if (!seq.label || *seq.label < 0 || *seq.label >= model.config().num_classes)
      throw DataError("train: utterance " + seq.utterance_id + " has a missing or out-of-range label");
    seen[static_cast<std::size_t>(*seq.label)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2)
    throw DataError("train: corpus needs at least two classes");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  auto params = model.parameters();
  OptimizerState<Scalar> state;
  auto good = Snapshot<Scalar>::take(params);
  TrainResult<Scalar> result;
  const auto& margin = model.config().margin;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const SgdOptions opt{cfg.lr_stages[state.stage], cfg.momentum, cfg.weight_decay};
    double loss_sum = 0.0;
    Index correct = 0, seen_utts = 0, batches = 0;
    try {
      for (const auto& idx : epoch_batches(corpus.size(), cfg.batch_size, rng)) {
        const auto batch = make_batch(corpus, idx, cfg.crop_range, rng);
        const auto [loss, hits] =
            train_step(model, params, state, batch, opt, margin.lambda_at(result.steps));
        ++result.steps;
        loss_sum += loss;
        correct += hits;
        seen_utts += batch.size();
        ++batches;
      }
    } catch (const NumericError& e) {
      GradTape<Scalar>::current().reset();
      good.restore(params);
      throw TrainingDiverged(std::string("training diverged in epoch ") + std::to_string(epoch) +
                                 ": " + e.what(),
                             epoch - 1);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = result.steps;
    rec.lr = opt.lr;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen_utts);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    good = Snapshot<Scalar>::take(params);
    if (cfg.target_train_acc && rec.train_acc >= *cfg.target_train_acc) {
      result.reached_target = true;
      break;
    }
    // While the margin is still being annealed in, the loss rises by design,
    // so the plateau rule only starts once the annealing weight is at its floor.
    const bool annealing = model.config().loss == LossKind::kASoftmax && margin.anneal &&
                           margin.lambda_at(result.steps) > margin.anneal_floor;
    if (!annealing) update_schedule(state, rec.loss, cfg);
  }
  return result;
}

}  // namespace uttenc

#endif  // UTTENC_TRAINER_HPP_
