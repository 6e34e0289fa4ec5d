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

// uttenc: synth, features, train, embed, score, eval, gradcheck.
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "uttenc/alloc.hpp"
#include "uttenc/gradcheck.hpp"
#include "uttenc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace uttenc;

namespace {

// Refuses to clobber existing outputs without --force and deletes whatever
// was claimed if the command does not reach commit().
class OutputGuard {
 public:
  explicit OutputGuard(bool force) : force_(force) {}
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    std::error_code ec;
    for (const auto& p : claimed_) fs::remove_all(p, ec);
  }

  void claim(const fs::path& p) {
    if (p.empty()) return;
    if (fs::exists(p) && !force_)
      throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
    claimed_.push_back(p);
  }
  void commit() { claimed_.clear(); }

 private:
  bool force_;
  std::vector<fs::path> claimed_;
};

std::vector<std::string> uefb_ids(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".uefb") ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("no .uefb files in " + dir.string());
  return ids;
}

struct DetFlags {
  double p_target = 0.01, c_miss = 1.0, c_fa = 1.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--p-target", p_target, "Target prior for C_det")->capture_default_str();
    cmd->add_option("--c-miss", c_miss, "Miss cost for C_det")->capture_default_str();
    cmd->add_option("--c-fa", c_fa, "False-alarm cost for C_det")->capture_default_str();
  }
  DetCostParams params() const {
    DetCostParams p{p_target, c_miss, c_fa};
    try {
      p.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    return p;
  }
};

// ---------------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  fs::path trials;
  SynthOptions opts;
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  try {
    a.opts.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  OutputGuard guard(a.force);
  guard.claim(a.out);
  guard.claim(a.trials);
  const auto corpus = synth_corpus(a.opts);
  write_corpus(a.out, corpus);
  if (!a.trials.empty()) write_trials(a.trials, all_pairs_trials(corpus));
  guard.commit();
  std::printf("wrote %zu utterances of %d classes to %s\n", corpus.size(), a.opts.n_classes,
              a.out.string().c_str());
  return kExitOk;
}

struct FeaturesArgs {
  std::vector<fs::path> wavs;
  fs::path out;
  FeaturePipelineOptions opts;
  bool force = false;
};

int cmd_features(const FeaturesArgs& a) {
  OutputGuard guard(a.force);
  guard.claim(a.out);
  fs::create_directories(a.out);
  for (const auto& wav : a.wavs) {
    const auto seq = extract_features(read_wav(wav), a.opts);
    write_uefb(a.out / (wav.stem().string() + ".uefb"), seq.features);
  }
  guard.commit();
  std::printf("wrote %zu feature files to %s\n", a.wavs.size(), a.out.string().c_str());
  return kExitOk;
}

// Command-line overrides of the run config; only options actually given
// are applied.
struct TrainArgs {
  fs::path config, corpus, out, log;
  bool force = false, print_config = false;
  std::string encoder, loss, aggregation, precision;
  int margin = 4, epochs = 0, lde_components = 0, embedding_dim = 0, crop_min = 0, crop_max = 0;
  int batch_size = 0;
  double width = 1.0, target_acc = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> lr_stages;
  bool no_anneal = false;
  CLI::App* cmd = nullptr;

  bool given(const char* name) const { return cmd->count(name) > 0; }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig() : load_run_config(config);
    if (given("--encoder")) c.model.encoder = parse_encoder_kind(encoder);
    if (given("--loss")) c.model.loss = parse_loss_kind(loss);
    if (given("--margin")) c.model.margin.m = margin;
    if (given("--lde-components")) c.model.lde_components = lde_components;
    if (given("--lde-aggregation"))
      c = RunConfig::from_json({{"encoder", {{"lde_aggregation", aggregation}}}}, c);
    if (given("--embedding-dim")) c.model.embedding_dim = embedding_dim;
    if (given("--width")) c.model.frontend.width_multiplier = width;
    if (given("--epochs")) c.train.epochs = epochs;
    if (given("--batch-size")) c.train.batch_size = batch_size;
    if (given("--lr-stages")) c.train.lr_stages = lr_stages;
    if (given("--crop-min")) c.train.crop_range[0] = crop_min;
    if (given("--crop-max")) c.train.crop_range[1] = crop_max;
    if (given("--seed")) c.train.seed = seed;
    if (given("--target-acc")) c.train.target_train_acc = target_acc;
    if (no_anneal) c.model.margin.anneal = false;
    if (given("--precision")) c = RunConfig::from_json({{"precision", precision}}, c);
    return c;
  }
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.resolve();
  cfg.validate();
  if (a.print_config) std::cout << cfg.to_json().dump(2) << "\n";
  const fs::path log_path = a.log.empty() ? fs::path(a.out.string() + ".log.csv") : a.log;
  OutputGuard guard(a.force);
  guard.claim(a.out);
  guard.claim(log_path);

  auto corpus = read_corpus(a.corpus);
  cfg.model.num_classes = compact_labels(corpus);
  cfg.model.validate();

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path.string());
  log << kTrainLogHeader << "\n";
  const auto outcome = run_training(cfg, corpus, [&](const EpochRecord& r) {
    log << format_log_row(r) << "\n" << std::flush;
    std::fprintf(stderr, "epoch %d  lr %g  loss %.5f  acc %.4f\n", r.epoch, r.lr, r.loss,
                 r.train_acc);
  });
  save_checkpoint(a.out, outcome.checkpoint);
  guard.commit();
  if (outcome.diverged) {
    std::fprintf(stderr, "%s\nlast good model written to %s\n", outcome.message.c_str(),
                 a.out.string().c_str());
    return kExitNumeric;
  }
  return kExitOk;
}

struct EmbedArgs {
  fs::path checkpoint, features, out;
  bool force = false;
};

int cmd_embed(const EmbedArgs& a) {
  OutputGuard guard(a.force);
  guard.claim(a.out);
  Embedder embedder(load_checkpoint(a.checkpoint));
  const auto ids = uefb_ids(a.features);
  const auto table = embed_all(embedder, read_features(a.features, ids));
  write_embeddings(a.out, table);
  guard.commit();
  std::printf("wrote %zu embeddings of dimension %ld to %s\n", table.size(),
              static_cast<long>(embedder.dim()), a.out.string().c_str());
  return kExitOk;
}

struct ScoreArgs {
  fs::path embeddings, trials, out;
  bool force = false;
};

int cmd_score(const ScoreArgs& a) {
  OutputGuard guard(a.force);
  guard.claim(a.out);
  const auto trials = read_trials(a.trials);
  const auto ids = trial_ids(trials);
  const auto scores = score_trials(read_embeddings(a.embeddings, ids), trials);
  write_scores(a.out, scores);
  guard.commit();
  return kExitOk;
}

struct EvalArgs {
  fs::path scores, checkpoint, features, trials, report, det;
  DetFlags det_flags;
  bool force = false;
};

int cmd_eval(const EvalArgs& a) {
  if (a.scores.empty() == (a.checkpoint.empty() || a.features.empty()))
    throw ConfigError("eval needs either --scores, or --checkpoint with --features");
  const auto params = a.det_flags.params();
  const fs::path det = a.det.empty() ? fs::path(a.report.string() + ".det.csv") : a.det;
  OutputGuard guard(a.force);
  guard.claim(a.report);
  guard.claim(det);
  const auto trials = read_trials(a.trials);
  VerificationReport report;
  if (!a.scores.empty()) {
    const auto scores = read_scores(a.scores);
    report = evaluate_scores(scores, trials, params);
  } else {
    report = run_verification(load_checkpoint(a.checkpoint), trials, a.features, params);
  }
  write_report(a.report, report);
  write_det_csv(det, report);
  guard.commit();
  std::printf("EER %.4f%%  minDCF %.4f  (%zu trials)\n", 100.0 * report.eer, report.min_cdet,
              report.n_trials);
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  bool ok = true;
  std::printf("%-26s %12s %8s  %s\n", "component", "max rel err", "entries", "result");
  for (const auto& r : run_gradcheck_suite(seed)) {
    std::printf("%-26s %12.3e %8ld  %s\n", r.name.c_str(), r.max_rel_error,
                static_cast<long>(r.entries), r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Utterance-level encoding: training, embedding and evaluation"};
  app.require_subcommand(1);
  int status = kExitOk;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  s->add_option("--out", synth.out, "Corpus directory")->required();
  s->add_option("--trials", synth.trials, "Also write an all-pairs trial list");
  s->add_option("--classes", synth.opts.n_classes, "Number of classes")->capture_default_str();
  s->add_option("--per-class", synth.opts.utts_per_class, "Utterances per class")
      ->capture_default_str();
  s->add_option("--dims", synth.opts.dims, "Coefficients per frame")->capture_default_str();
  s->add_option("--min-frames", synth.opts.min_frames)->capture_default_str();
  s->add_option("--max-frames", synth.opts.max_frames)->capture_default_str();
  s->add_option("--noise", synth.opts.noise, "Frame noise std")->capture_default_str();
  s->add_option("--session-ratio", synth.opts.session_ratio)->capture_default_str();
  s->add_option("--seed", synth.opts.seed)->capture_default_str();
  s->add_flag("--force", synth.force, "Overwrite existing outputs");
  s->callback([&] { status = cmd_synth(synth); });

  FeaturesArgs feats;
  auto* f = app.add_subcommand("features", "Log mel filterbank features from WAV files");
  f->add_option("wavs", feats.wavs, "16-bit PCM mono WAV files")->required()->check(CLI::ExistingFile);
  f->add_option("--out", feats.out, "Output directory")->required();
  f->add_option("--mels", feats.opts.fbank.n_mels)->capture_default_str();
  f->add_option("--vad-offset", feats.opts.vad_offset_db, "dB below the loudest frame")
      ->capture_default_str();
  f->add_option("--cmn-window", feats.opts.cmn_window, "Frames")->capture_default_str();
  f->add_flag("--force", feats.force, "Overwrite existing outputs");
  f->callback([&] { status = cmd_features(feats); });

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on a corpus directory");
  train.cmd = t;
  t->add_option("--config", train.config, "JSON run config")->check(CLI::ExistingFile);
  t->add_option("--corpus", train.corpus, "Corpus directory (manifest.csv)")->required();
  t->add_option("--out", train.out, "Checkpoint file")->required();
  t->add_option("--log", train.log, "Training log CSV (default <out>.log.csv)");
  t->add_option("--encoder", train.encoder, "tap, sap or lde");
  t->add_option("--loss", train.loss, "softmax, center or asoftmax");
  t->add_option("--margin", train.margin, "A-Softmax margin m in 1..4");
  t->add_flag("--no-anneal", train.no_anneal, "Disable A-Softmax annealing");
  t->add_option("--lde-components", train.lde_components);
  t->add_option("--lde-aggregation", train.aggregation, "frame_mean or weight_normalized");
  t->add_option("--embedding-dim", train.embedding_dim);
  t->add_option("--width", train.width, "Frontend width multiplier");
  t->add_option("--epochs", train.epochs);
  t->add_option("--batch-size", train.batch_size);
  t->add_option("--lr-stages", train.lr_stages)->expected(1, -1);
  t->add_option("--crop-min", train.crop_min);
  t->add_option("--crop-max", train.crop_max);
  t->add_option("--seed", train.seed);
  t->add_option("--target-acc", train.target_acc, "Stop once training accuracy reaches this");
  t->add_option("--precision", train.precision, "float32 or float64");
  t->add_flag("--print-config", train.print_config, "Print the resolved config");
  t->add_flag("--force", train.force, "Overwrite existing outputs");
  t->callback([&] { status = cmd_train(train); });

  EmbedArgs embed;
  auto* e = app.add_subcommand("embed", "Embed every .uefb file of a directory");
  e->add_option("--checkpoint", embed.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--features", embed.features, "Feature directory")->required();
  e->add_option("--out", embed.out, "Embedding directory")->required();
  e->add_flag("--force", embed.force, "Overwrite existing outputs");
  e->callback([&] { status = cmd_embed(embed); });

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Cosine-score a trial list");
  sc->add_option("--embeddings", score.embeddings, "Embedding directory")->required();
  sc->add_option("--trials", score.trials)->required()->check(CLI::ExistingFile);
  sc->add_option("--out", score.out, "Score file")->required();
  sc->add_flag("--force", score.force, "Overwrite existing outputs");
  sc->callback([&] { status = cmd_score(score); });

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "EER and minDCF from scores, or end to end");
  v->add_option("--trials", ev.trials)->required()->check(CLI::ExistingFile);
  v->add_option("--scores", ev.scores, "Score file")->check(CLI::ExistingFile);
  v->add_option("--checkpoint", ev.checkpoint)->check(CLI::ExistingFile);
  v->add_option("--features", ev.features, "Feature directory");
  v->add_option("--report", ev.report, "Report JSON")->required();
  v->add_option("--det", ev.det, "DET points CSV (default <report>.det.csv)");
  ev.det_flags.add(v);
  v->add_flag("--force", ev.force, "Overwrite existing outputs");
  v->callback([&] { status = cmd_eval(ev); });

  std::uint64_t gc_seed = 0;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  g->add_option("--seed", gc_seed)->capture_default_str();
  g->callback([&] { status = cmd_gradcheck(gc_seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitConfig;
  } catch (const NumericError& err) {
    std::fprintf(stderr, "numeric error: %s\n", err.what());
    return kExitNumeric;
  } catch (const DegenerateInputError& err) {
    std::fprintf(stderr, "numeric error: %s\n", err.what());
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "data error: %s\n", err.what());
    return kExitData;
  }
  return status;
}
