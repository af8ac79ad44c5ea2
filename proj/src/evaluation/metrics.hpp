/* Copyright 2026 The invdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <span>
#include <string>
#include <vector>

#include "attacks/attacks.hpp"

namespace invdet {

// Positive means "should be rejected" (an error or an adversarial image).
struct ScoredSample {
  double score = 0.0;
  bool positive = false;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  // From (0, 0) to (1, 1), one point per distinct score plus the origin.
  std::vector<RocPoint> points;
  // P(score_pos > score_neg) + P(tie) / 2.
  double auroc = 0.0;
  std::size_t positives = 0, negatives = 0;
};

// Mann-Whitney estimator with midranks for ties. Throws on single-class
// input and on NaN scores.
double mann_whitney_auroc(std::span<const ScoredSample> samples);
// Threshold sweep over the distinct scores; auroc holds the rank statistic.
RocCurve roc_auroc(std::span<const ScoredSample> samples);
// Trapezoidal area under the curve's points.
double trapezoid_area(std::span<const RocPoint> points);

std::vector<ScoredSample> labeled_scores(std::span<const double> negatives,
                                         std::span<const double> positives);

// Fraction of attempts that fool F and score strictly below tau. scores
// lines up with results. Throws on an empty result set.
double bypass_rate(const std::vector<AttackResult>& results, std::span<const double> scores,
                   double tau);

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
};
// NaN mean and median on empty input.
SummaryStats summarize(std::vector<double> values);

struct Histogram {
  std::vector<double> edges;  // bins + 1 ascending values; one bin if all scores are equal
  std::vector<std::string> groups;
  std::vector<std::vector<std::size_t>> counts;  // [group][bin]
  bool log_x = false;
};

// Shared bins across the groups. log_x spaces the edges logarithmically
// between the smallest positive score and the maximum; smaller scores land
// in the first bin. Groups must be nonempty.
Histogram score_histogram(const std::vector<std::string>& names,
                          const std::vector<std::vector<double>>& groups, std::size_t bins,
                          bool log_x = false);

}  // namespace invdet
