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

#include "uttenc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <utility>

namespace uttenc {

void DetCostParams::validate() const {
  if (!(p_target > 0.0 && p_target < 1.0)) {
    throw ConfigError("p_target must lie in (0, 1)");
  }
  if (!(c_miss > 0.0 && c_fa > 0.0)) throw ConfigError("detection costs must be positive");
}

double cosine_score(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_score: dimension mismatch " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  }
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_score: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::vector<OperatingPoint> det_curve(std::span<const double> scores,
                                      std::span<const bool> is_target) {
  if (scores.size() != is_target.size()) {
    throw std::invalid_argument("det_curve: scores and labels differ in length");
  }
  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(scores.size());
  std::size_t n_target = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("non-finite score");
    sorted.emplace_back(scores[i], is_target[i]);
    n_target += is_target[i] ? 1 : 0;
  }
  const std::size_t n_nontarget = scores.size() - n_target;
  if (n_target == 0 || n_nontarget == 0) {
    throw EmptyInputError("need at least one target and one non-target trial");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<OperatingPoint> curve;
  std::size_t targets_below = 0, nontargets_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i].first;
    curve.push_back({threshold, static_cast<double>(targets_below) / n_target,
                     static_cast<double>(n_nontarget - nontargets_below) / n_nontarget});
    for (; i < sorted.size() && sorted[i].first == threshold; ++i) {
      (sorted[i].second ? targets_below : nontargets_below) += 1;
    }
  }
  curve.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  return curve;
}

double eer_from_curve(std::span<const OperatingPoint> curve) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& b = curve[i];
    if (b.p_miss < b.p_fa) continue;
    if (b.p_miss == b.p_fa || i == 0) return b.p_miss;
    const auto& a = curve[i - 1];
    const double s = (a.p_fa - a.p_miss) / ((b.p_miss - a.p_miss) - (b.p_fa - a.p_fa));
    return a.p_miss + s * (b.p_miss - a.p_miss);
  }
  throw std::logic_error("DET curve never crosses P_miss = P_fa");
}

double eer(std::span<const double> scores, std::span<const bool> is_target) {
  const auto curve = det_curve(scores, is_target);
  return eer_from_curve(curve);
}

double min_cdet_from_curve(std::span<const OperatingPoint> curve, const DetCostParams& params) {
  params.validate();
  const double norm = std::min(params.c_miss * params.p_target,
                               params.c_fa * (1.0 - params.p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& op : curve) {
    const double cost = params.c_miss * op.p_miss * params.p_target +
                        params.c_fa * op.p_fa * (1.0 - params.p_target);
    best = std::min(best, cost);
  }
  return best / norm;
}

double min_cdet(std::span<const double> scores, std::span<const bool> is_target,
                const DetCostParams& params) {
  const auto curve = det_curve(scores, is_target);
  return min_cdet_from_curve(curve, params);
}

double cavg(const Eigen::MatrixXd& scores, std::span<const int> truth,
            const CavgParams& params) {
  const Eigen::Index n_utt = scores.rows(), n_lang = scores.cols();
  if (n_lang < 2) throw std::invalid_argument("cavg: need at least two languages");
  if (static_cast<Eigen::Index>(truth.size()) != n_utt) {
    throw std::invalid_argument("cavg: " + std::to_string(truth.size()) + " labels for " +
                                std::to_string(n_utt) + " utterances");
  }
  std::vector<std::size_t> per_lang(static_cast<std::size_t>(n_lang), 0);
  for (Eigen::Index u = 0; u < n_utt; ++u) {
    const int y = truth[static_cast<std::size_t>(u)];
    if (y < 0 || y >= n_lang) throw std::out_of_range("cavg: language label out of range");
    for (Eigen::Index l = 0; l < n_lang; ++l) {
      if (!std::isfinite(scores(u, l))) {
        throw DataError("cavg: utterance " + std::to_string(u) + " has no score for language " +
                        std::to_string(l));
      }
    }
    ++per_lang[static_cast<std::size_t>(y)];
  }
  for (Eigen::Index l = 0; l < n_lang; ++l) {
    if (per_lang[static_cast<std::size_t>(l)] == 0) {
      throw DataError("cavg: no utterances of language " + std::to_string(l));
    }
  }
  // accept[t][n]: utterances of language n accepted by the detector of t
  Eigen::MatrixXd accept = Eigen::MatrixXd::Zero(n_lang, n_lang);
  for (Eigen::Index u = 0; u < n_utt; ++u) {
    const int y = truth[static_cast<std::size_t>(u)];
    for (Eigen::Index t = 0; t < n_lang; ++t)
      if (scores(u, t) >= params.threshold) accept(t, y) += 1.0;
  }
  double total = 0.0;
  for (Eigen::Index t = 0; t < n_lang; ++t) {
    const double n_t = static_cast<double>(per_lang[static_cast<std::size_t>(t)]);
    const double p_miss = 1.0 - accept(t, t) / n_t;
    double fa = 0.0;
    for (Eigen::Index n = 0; n < n_lang; ++n) {
      if (n == t) continue;
      fa += params.c_fa * (1.0 - params.p_target) * accept(t, n) /
            static_cast<double>(per_lang[static_cast<std::size_t>(n)]);
    }
    total += params.c_miss * params.p_target * p_miss + fa / static_cast<double>(n_lang - 1);
  }
  return total / static_cast<double>(n_lang);
}

double topk_accuracy(const Eigen::MatrixXd& scores, std::span<const int> truth, int k) {
  if (k < 1) throw std::invalid_argument("topk_accuracy: k must be >= 1");
  if (k > scores.cols()) {
    throw std::invalid_argument("topk_accuracy: k exceeds the number of classes");
  }
  if (static_cast<Eigen::Index>(truth.size()) != scores.rows()) {
    throw std::invalid_argument("topk_accuracy: label count does not match rows");
  }
  if (scores.rows() == 0) throw EmptyInputError("topk_accuracy: no utterances");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const int y = truth[static_cast<std::size_t>(i)];
    if (y < 0 || y >= scores.cols()) throw std::out_of_range("topk_accuracy: label out of range");
    const double s = scores(i, y);
    Eigen::Index rank = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (scores(i, j) > s || (scores(i, j) == s && j < y)) ++rank;
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

// ---------------------------------------------------------------------------

TrialList read_trials(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open trial list " + path.string());
  TrialList trials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string label;
    Trial t;
    if (!(ss >> label >> t.enroll >> t.test) || (label != "0" && label != "1")) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected `label enroll_id test_id` with label 0 or 1");
    }
    t.target = label == "1";
    trials.push_back(std::move(t));
  }
  return trials;
}

void write_trials(const std::filesystem::path& path, const TrialList& trials) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& t : trials) os << (t.target ? 1 : 0) << ' ' << t.enroll << ' ' << t.test << '\n';
}

namespace {

std::string format_score(double score) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", score);
  return buf;
}

}  // namespace

double quantize_score(double score) { return std::strtod(format_score(score).c_str(), nullptr); }

void write_scores(const std::filesystem::path& path, std::span<const ScoredTrial> scores) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& s : scores) os << s.enroll << ' ' << s.test << ' ' << format_score(s.score) << '\n';
}

std::vector<ScoredTrial> read_scores(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open score file " + path.string());
  std::vector<ScoredTrial> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    ScoredTrial s;
    if (!(ss >> s.enroll >> s.test >> s.score)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected `enroll_id test_id score`");
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json VerificationReport::to_json() const {
  return {{"eer", eer},
          {"min_cdet", min_cdet},
          {"params", {{"p_target", params.p_target}, {"c_miss", params.c_miss}, {"c_fa", params.c_fa}}},
          {"n_trials", n_trials},
          {"n_target", n_target},
          {"n_nontarget", n_nontarget}};
}

VerificationReport VerificationReport::from_json(const nlohmann::json& j) {
  VerificationReport r;
  try {
    r.eer = j.at("eer").get<double>();
    r.min_cdet = j.at("min_cdet").get<double>();
    const auto& p = j.at("params");
    r.params = {p.at("p_target").get<double>(), p.at("c_miss").get<double>(),
                p.at("c_fa").get<double>()};
    r.n_trials = j.at("n_trials").get<std::size_t>();
    r.n_target = j.at("n_target").get<std::size_t>();
    r.n_nontarget = j.at("n_nontarget").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed verification report: ") + e.what());
  }
  return r;
}

VerificationReport evaluate_scores(std::span<const ScoredTrial> scores, const TrialList& trials,
                                   const DetCostParams& params) {
  params.validate();
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const auto& s : scores) lookup[{s.enroll, s.test}] = s.score;
  std::vector<double> values;
  std::vector<char> labels;
  values.reserve(trials.size());
  for (const auto& t : trials) {
    auto it = lookup.find({t.enroll, t.test});
    if (it == lookup.end()) {
      throw DataError("no score for trial " + t.enroll + " " + t.test);
    }
    values.push_back(it->second);
    labels.push_back(t.target ? 1 : 0);
  }
  // std::vector<bool> is not contiguous
  auto flags = std::make_unique<bool[]>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = labels[i] != 0;
  std::span<const bool> target_span(flags.get(), labels.size());

  VerificationReport r;
  r.det = det_curve(values, target_span);
  r.eer = eer_from_curve(r.det);
  r.min_cdet = min_cdet_from_curve(r.det, params);
  r.params = params;
  r.n_trials = trials.size();
  r.n_target = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.n_nontarget = r.n_trials - r.n_target;
  return r;
}

void write_report(const std::filesystem::path& json_path, const VerificationReport& report) {
  std::ofstream os(json_path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + json_path.string());
  os << report.to_json().dump(2) << '\n';
}

void write_det_csv(const std::filesystem::path& csv_path, const VerificationReport& report) {
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + csv_path.string());
  os << "threshold,p_miss,p_fa\n";
  char buf[128];
  for (const auto& op : report.det) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.8f,%.8f\n", op.threshold, op.p_miss, op.p_fa);
    os << buf;
  }
}

}  // namespace uttenc
