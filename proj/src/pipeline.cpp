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

#include "uttenc/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace uttenc {

std::string format_log_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%ld,%.17g,%.17g,%.17g,%.3f", r.epoch, r.step, r.lr, r.loss,
                r.train_acc, r.wall_ms);
  return buf;
}

// ---------------------------------------------------------------------------
// Corpora

void write_corpus(const std::filesystem::path& dir, std::span<const FrameSequence> corpus) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
  manifest << "utterance_id,class,length\n";
  for (const auto& seq : corpus) {
    write_uefb(dir / (seq.utterance_id + ".uefb"), seq.features);
    manifest << seq.utterance_id << ',' << (seq.label ? std::to_string(*seq.label) : "") << ','
             << seq.frames() << '\n';
  }
  if (!manifest) throw DataError("short write to " + (dir / "manifest.csv").string());
}

std::vector<FrameSequence> read_corpus(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.csv";
  std::ifstream is(path);
  if (!is) throw DataError("cannot open corpus manifest " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "utterance_id,class,length")
    throw DataError(path.string() + ": missing header 'utterance_id,class,length'");
  std::vector<FrameSequence> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, cls, len;
    if (!std::getline(ss, id, ',') || !std::getline(ss, cls, ',') || !std::getline(ss, len))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    FrameSequence seq;
    seq.utterance_id = id;
    try {
      if (!cls.empty()) seq.label = std::stoi(cls);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad class '" + cls + "'");
    }
    seq.features = read_uefb(dir / (id + ".uefb"));
    if (std::to_string(seq.frames()) != len)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": length of " + id +
                      " is " + std::to_string(seq.frames()) + ", manifest says " + len);
    out.push_back(std::move(seq));
  }
  if (out.empty()) throw DataError(path.string() + ": corpus is empty");
  return out;
}

std::vector<FrameSequence> read_features(const std::filesystem::path& dir,
                                         std::span<const std::string> ids) {
  std::vector<FrameSequence> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto path = dir / (id + ".uefb");
    if (!std::filesystem::exists(path)) throw DataError("no features for utterance '" + id + "'");
    out.push_back({read_uefb(path), id, std::nullopt});
  }
  return out;
}

int compact_labels(std::vector<FrameSequence>& corpus) {
  std::map<int, int> remap;
  for (auto& seq : corpus) {
    if (!seq.label) throw DataError("utterance " + seq.utterance_id + " has no class");
    auto it = remap.emplace(*seq.label, static_cast<int>(remap.size())).first;
    seq.label = it->second;
  }
  return static_cast<int>(remap.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename Scalar>
TrainOutcome train_as(const RunConfig& cfg, std::span<const FrameSequence> corpus,
                      const std::function<void(const EpochRecord&)>& on_epoch) {
  Model<Scalar> model(cfg.model, cfg.train.seed);
  TrainOutcome out;
  auto record = [&](const EpochRecord& r) {
    out.log.push_back(r);
    if (on_epoch) on_epoch(r);
  };
  try {
    train(model, corpus, cfg.train, record);
  } catch (const TrainingDiverged& e) {
    out.diverged = true;
    out.message = e.what();
  }
  out.checkpoint = capture(model, cfg);
  return out;
}

}  // namespace

TrainOutcome run_training(const RunConfig& cfg, std::span<const FrameSequence> corpus,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  cfg.model.validate();
  return cfg.precision == Precision::kFloat32 ? train_as<float>(cfg, corpus, on_epoch)
                                              : train_as<double>(cfg, corpus, on_epoch);
}

// ---------------------------------------------------------------------------
// Embedding and scoring

Embedder::Embedder(const Checkpoint& ck) : cfg_(ck.run_config()) {
  if (ck.dtype == "float32")
    model_ = std::make_unique<Model<float>>(model_from_checkpoint<float>(ck));
  else
    model_ = std::make_unique<Model<double>>(model_from_checkpoint<double>(ck));
}

Embedder::~Embedder() = default;
Embedder::Embedder(Embedder&&) noexcept = default;
Embedder& Embedder::operator=(Embedder&&) noexcept = default;

Eigen::VectorXd Embedder::embed(const FrameSequence& seq) {
  const Index mels = cfg_.model.frontend.input_mels;
  if (seq.dims() != mels)
    throw DataError("utterance " + seq.utterance_id + " has " + std::to_string(seq.dims()) +
                    " coefficients, model expects " + std::to_string(mels));
  if (seq.frames() == 0) throw DataError("utterance " + seq.utterance_id + " has no frames");
  Eigen::MatrixXd feats = seq.features;
  if (feats.cols() < 8) {
    Eigen::MatrixXd tiled(feats.rows(), 8);
    for (Index t = 0; t < 8; ++t) tiled.col(t) = feats.col(t % feats.cols());
    feats = std::move(tiled);
  }
  const RowMatrix<double> rows = feats;
  return std::visit(
      [&](auto& model) -> Eigen::VectorXd {
        using Scalar = typename std::decay_t<decltype(*model)>::ScalarType;
        NoGradGuard guard;
        Tensor<Scalar> x({1, 1, rows.rows(), rows.cols()},
                         Eigen::Map<const ArrayX<double>>(rows.data(), rows.size()).cast<Scalar>());
        const auto emb = model->embed(x, NormMode::kEval);
        return emb.value().template cast<float>().template cast<double>().matrix();
      },
      model_);
}

EmbeddingTable embed_all(Embedder& embedder, std::span<const FrameSequence> utts) {
  EmbeddingTable table;
  for (const auto& seq : utts)
    if (!table.count(seq.utterance_id)) table.emplace(seq.utterance_id, embedder.embed(seq));
  return table;
}

void write_embeddings(const std::filesystem::path& dir, const EmbeddingTable& table) {
  std::filesystem::create_directories(dir);
  for (const auto& [id, v] : table) write_uefb(dir / (id + ".uefb"), v);
}

EmbeddingTable read_embeddings(const std::filesystem::path& dir, std::span<const std::string> ids) {
  EmbeddingTable table;
  for (const auto& id : ids) {
    const auto path = dir / (id + ".uefb");
    if (!std::filesystem::exists(path)) throw DataError("no embedding for utterance '" + id + "'");
    const Eigen::MatrixXd m = read_uefb(path);
    if (m.cols() != 1) throw DataError(path.string() + " is not an embedding file (L != 1)");
    table.emplace(id, m.col(0));
  }
  return table;
}

std::vector<std::string> trial_ids(const TrialList& trials) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& t : trials)
    for (const auto* id : {&t.enroll, &t.test})
      if (seen.insert(*id).second) ids.push_back(*id);
  return ids;
}

std::vector<ScoredTrial> score_trials(const EmbeddingTable& table, const TrialList& trials) {
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  auto lookup = [&](const std::string& id) -> const Eigen::VectorXd& {
    auto it = table.find(id);
    if (it == table.end()) throw DataError("no embedding for utterance '" + id + "'");
    return it->second;
  };
  for (const auto& t : trials)
    out.push_back({t.enroll, t.test, quantize_score(cosine_score(lookup(t.enroll), lookup(t.test)))});
  return out;
}

VerificationReport run_verification(const Checkpoint& ck, const TrialList& trials,
                                    const std::filesystem::path& feature_dir,
                                    const DetCostParams& params) {
  params.validate();
  const auto ids = trial_ids(trials);
  const auto utts = read_features(feature_dir, ids);
  Embedder embedder(ck);
  const auto table = embed_all(embedder, utts);
  const auto scores = score_trials(table, trials);
  return evaluate_scores(scores, trials, params);
}

TrialList all_pairs_trials(std::span<const FrameSequence> utts) {
  TrialList out;
  for (std::size_t i = 0; i < utts.size(); ++i)
    for (std::size_t j = i + 1; j < utts.size(); ++j)
      out.push_back({utts[i].utterance_id, utts[j].utterance_id,
                     utts[i].label.has_value() && utts[i].label == utts[j].label});
  return out;
}

}  // namespace uttenc
