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

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "classifier/classifier.hpp"
#include "transforms/transforms.hpp"

namespace invdet {

// Probabilities below this are floored before taking logs.
inline constexpr double kProbFloor = 1e-12;

// KL(p || q) in nats: sum_c p_c ln(p_c / max(q_c, kProbFloor)), with
// 0 ln(0 / q) = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const PosteriorDist& p, const PosteriorDist& q);

// Differentiable per-row KL(softmax(zp / T) || softmax(zq / T)) for logits
// [B, N]; returns [B], clamped at 0. Same flooring as the scalar version.
// dkl_score and the combined model G both use this path.
Tensor kl_divergence_logits(const Tensor& zp, const Tensor& zq, double temperature);

// D_KL(F(x) || F(t(x))) with the temperature applied to both posteriors.
double dkl_score(const ClassifierModel& model, const LabeledImage& image,
                 const Transform& transform, double temperature = 1.0);
std::vector<double> dkl_scores(const ClassifierModel& model, const Dataset& images,
                               const Transform& transform, double temperature = 1.0);
// Same as dkl_scores when the original-image logits are already known.
std::vector<double> dkl_scores(const ClassifierModel& model, const Dataset& images,
                               const std::vector<std::vector<double>>& original_logits,
                               const Transform& transform, double temperature = 1.0);

// 1 - max_c F_c(x) at T = 1; higher is more suspicious.
double msr_score(std::span<const double> probs);
double msr_score(const ClassifierModel& model, const LabeledImage& image);

inline constexpr std::size_t kDefaultDropoutPasses = 30;

// Mean over classes of the (population) variance of K MC-dropout posteriors.
double dropout_score(const ClassifierModel& model, const LabeledImage& image,
                     std::size_t passes = kDefaultDropoutPasses, std::uint64_t seed = 0);

enum class Aggregate { kSingle, kMean, kMax };
Aggregate parse_aggregate(const std::string& name);
// kSingle requires exactly one score.
double aggregate_scores(std::span<const double> scores, Aggregate mode);

struct CalibrationResult {
  double threshold = 0.0;
  double achieved_fpr = 0.0;
  std::size_t calibration_size = 0;
  bool undersized = false;  // fewer than 1 / target samples
};

inline constexpr double kDefaultTargetFpr = 0.01;

// Smallest threshold tau, taken from the calibration scores, such that the
// fraction of scores strictly above tau is <= target_fpr. target_fpr >= 1
// yields tau = -inf (everything may be rejected).
CalibrationResult calibrate_threshold(std::span<const double> negative_scores,
                                      double target_fpr = kDefaultTargetFpr);

struct DetectorVerdict {
  double score = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  bool reject = false;
  std::string transforms;
  double temperature = 1.0;
};

// reject == (score > threshold).
DetectorVerdict make_verdict(double score, double threshold, std::string transforms = "",
                             double temperature = 1.0);

}  // namespace invdet
