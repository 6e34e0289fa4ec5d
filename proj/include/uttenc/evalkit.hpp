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

// Verification and identification metrics.
//
// A trial is accepted when its score is >= the threshold. Operating points
// are evaluated at every distinct score plus +infinity, so that the sweep
// runs from (P_miss, P_fa) = (0, 1) to (1, 0).

#ifndef UTTENC_EVALKIT_HPP_
#define UTTENC_EVALKIT_HPP_

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "uttenc/errors.hpp"

namespace uttenc {

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;
};

using TrialList = std::vector<Trial>;

struct DetCostParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void validate() const;
};

struct OperatingPoint {
  double threshold;
  double p_miss;
  double p_fa;
};

/// Cosine similarity in [-1, 1]. Throws DegenerateInputError on a zero vector.
double cosine_score(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// All operating points, ascending in threshold. Needs at least one target
/// and one non-target score.
std::vector<OperatingPoint> det_curve(std::span<const double> scores,
                                      std::span<const bool> is_target);

/// Equal error rate, interpolated linearly between the two operating
/// points where P_miss - P_fa changes sign.
double eer_from_curve(std::span<const OperatingPoint> curve);
double eer(std::span<const double> scores, std::span<const bool> is_target);

/// Minimum normalised detection cost
/// min_t [c_miss P_miss(t) p + c_fa P_fa(t) (1 - p)] / min(c_miss p, c_fa (1 - p)).
double min_cdet_from_curve(std::span<const OperatingPoint> curve, const DetCostParams& params);
double min_cdet(std::span<const double> scores, std::span<const bool> is_target,
                const DetCostParams& params = {});

struct CavgParams {
  double p_target = 0.5;
  double c_miss = 1.0;
  double c_fa = 1.0;
  double threshold = 0.0;  // on log-odds scores; score >= threshold accepts
};

/// Closed-set average detection cost over languages. `scores` is
/// utterances x languages; `truth` holds each utterance's language.
double cavg(const Eigen::MatrixXd& scores, std::span<const int> truth,
            const CavgParams& params = {});

/// Fraction of rows whose true class ranks within the top k; ties rank the
/// lower class index first.
double topk_accuracy(const Eigen::MatrixXd& scores, std::span<const int> truth, int k);

// ---------------------------------------------------------------------------
// Files and reports

/// Text trial list, one `label enroll_id test_id` per line, label in {0, 1}.
TrialList read_trials(const std::filesystem::path& path);
void write_trials(const std::filesystem::path& path, const TrialList& trials);

struct ScoredTrial {
  std::string enroll;
  std::string test;
  double score;
};

/// Score file, one `enroll_id test_id score` per line, score with 6 decimals.
void write_scores(const std::filesystem::path& path, std::span<const ScoredTrial> scores);
std::vector<ScoredTrial> read_scores(const std::filesystem::path& path);

/// Rounds a score the way the score file stores it.
double quantize_score(double score);

struct VerificationReport {
  double eer = 0.0;
  double min_cdet = 0.0;
  DetCostParams params;
  std::size_t n_trials = 0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
  std::vector<OperatingPoint> det;

  nlohmann::json to_json() const;
  static VerificationReport from_json(const nlohmann::json& j);
};

/// Matches scores to trials by (enroll, test) id and computes the report.
VerificationReport evaluate_scores(std::span<const ScoredTrial> scores, const TrialList& trials,
                                   const DetCostParams& params);

void write_report(const std::filesystem::path& json_path, const VerificationReport& report);
void write_det_csv(const std::filesystem::path& csv_path, const VerificationReport& report);

}  // namespace uttenc

#endif  // UTTENC_EVALKIT_HPP_
