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

// Glue between corpora on disk, training, embedding and scoring.

#ifndef UTTENC_PIPELINE_HPP_
#define UTTENC_PIPELINE_HPP_

#include <Eigen/Core>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uttenc/checkpoint.hpp"
#include "uttenc/evalkit.hpp"
#include "uttenc/features.hpp"
#include "uttenc/trainer.hpp"

namespace uttenc {

// ---------------------------------------------------------------------------
// Corpora

/// Corpus directory: manifest.csv (`utterance_id,class,length`) plus one
/// `<utterance_id>.uefb` per row.
void write_corpus(const std::filesystem::path& dir, std::span<const FrameSequence> corpus);
std::vector<FrameSequence> read_corpus(const std::filesystem::path& dir);

/// Loads `<dir>/<id>.uefb` for each id. Throws DataError naming the first
/// missing id.
std::vector<FrameSequence> read_features(const std::filesystem::path& dir,
                                         std::span<const std::string> ids);

/// Relabels classes to 0..K-1 in order of first appearance; returns K.
int compact_labels(std::vector<FrameSequence>& corpus);

// ---------------------------------------------------------------------------
// Training

struct TrainOutcome {
  Checkpoint checkpoint;  // final model, or the last good one after divergence
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string message;
};

/// Builds the model for `cfg` (precision included) and trains it.
TrainOutcome run_training(const RunConfig& cfg, std::span<const FrameSequence> corpus,
                          const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Embedding and scoring

/// Frozen model of either precision, applied one utterance at a time at
/// full length.
class Embedder {
 public:
  explicit Embedder(const Checkpoint& ck);
  ~Embedder();
  Embedder(Embedder&&) noexcept;
  Embedder& operator=(Embedder&&) noexcept;

  const RunConfig& config() const { return cfg_; }
  Index dim() const { return cfg_.model.embedding_dim; }

  /// Embedding rounded to float32, the precision of embedding files.
  /// Utterances shorter than 8 frames are tiled cyclically.
  Eigen::VectorXd embed(const FrameSequence& seq);

 private:
  RunConfig cfg_;
  std::variant<std::unique_ptr<Model<float>>, std::unique_ptr<Model<double>>> model_;
};

using EmbeddingTable = std::map<std::string, Eigen::VectorXd>;

EmbeddingTable embed_all(Embedder& embedder, std::span<const FrameSequence> utts);

/// Embedding files: UEFB with one column.
void write_embeddings(const std::filesystem::path& dir, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::filesystem::path& dir, std::span<const std::string> ids);

/// Distinct enroll and test ids, in first-appearance order.
std::vector<std::string> trial_ids(const TrialList& trials);

/// Cosine score per trial, rounded as in the score file. Throws DataError
/// naming a missing id.
std::vector<ScoredTrial> score_trials(const EmbeddingTable& table, const TrialList& trials);

/// Embeds every utterance referenced by `trials` once, scores every trial
/// and builds the report.
VerificationReport run_verification(const Checkpoint& ck, const TrialList& trials,
                                    const std::filesystem::path& feature_dir,
                                    const DetCostParams& params);

/// All enroll/test pairs of `utts` (i < j), target when the labels agree.
TrialList all_pairs_trials(std::span<const FrameSequence> utts);

}  // namespace uttenc

#endif  // UTTENC_PIPELINE_HPP_
