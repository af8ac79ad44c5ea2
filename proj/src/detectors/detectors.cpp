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

#include "detectors/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace invdet {

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  INVDET_REQUIRE(
      p.size() == q.size(), ErrorCode::kShapeMismatch,
      "kl_divergence: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
  INVDET_REQUIRE(!p.empty(), ErrorCode::kShapeMismatch, "kl_divergence: empty distributions");
  double d = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    INVDET_REQUIRE(p[c] >= 0.0 && q[c] >= 0.0, ErrorCode::kDomain,
                   "kl_divergence: negative probability");
    if (p[c] == 0.0) continue;
    d += p[c] * (std::log(p[c]) - std::log(std::max(q[c], kProbFloor)));
  }
  // Rounding can leave tiny negatives for p ~= q.
  return std::max(d, 0.0);
}

double kl_divergence(const PosteriorDist& p, const PosteriorDist& q) {
  return kl_divergence(p.probs, q.probs);
}

Tensor kl_divergence_logits(const Tensor& zp, const Tensor& zq, double temperature) {
  INVDET_REQUIRE(temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be > 0");
  INVDET_REQUIRE(zp.shape() == zq.shape() && zp.rank() == 2, ErrorCode::kShapeMismatch,
                 "kl_divergence_logits: need matching [B,N] logits");
  const double inv_t = 1.0 / temperature;
  const Tensor logp = log_softmax(mul(zp, inv_t));
  const Tensor logq = maximum(log_softmax(mul(zq, inv_t)), std::log(kProbFloor));
  // Rounding can leave tiny negatives for p ~= q.
  return maximum(sum(mul(exp(logp), sub(logp, logq)), 1), 0.0);
}

namespace {

// Both the standalone scores and the combined model G go through
// kl_divergence_logits so that threshold comparisons agree bit for bit.
double kl_rows(const std::vector<double>& zp, const std::vector<double>& zq, double temperature) {
  NoGradGuard no_grad;
  const Shape s{1, zp.size()};
  return kl_divergence_logits(Tensor::from(s, zp), Tensor::from(s, zq), temperature)[0];
}

}  // namespace

std::vector<double> dkl_scores(const ClassifierModel& model, const Dataset& images,
                               const std::vector<std::vector<double>>& original_logits,
                               const Transform& transform, double temperature) {
  INVDET_REQUIRE(original_logits.size() == images.size(), ErrorCode::kShapeMismatch,
                 "dkl_scores: logits/images count mismatch");
  Dataset transformed;
  transformed.reserve(images.size());
  for (const auto& im : images) transformed.push_back(transform.apply(im));
  const auto zt = batch_logits(model, transformed);
  std::vector<double> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out[i] = kl_rows(original_logits[i], zt[i], temperature);
  }
  return out;
}

std::vector<double> dkl_scores(const ClassifierModel& model, const Dataset& images,
                               const Transform& transform, double temperature) {
  return dkl_scores(model, images, batch_logits(model, images), transform, temperature);
}

double dkl_score(const ClassifierModel& model, const LabeledImage& image,
                 const Transform& transform, double temperature) {
  return kl_rows(image_logits(model, image), image_logits(model, transform.apply(image)),
                 temperature);
}

double msr_score(std::span<const double> probs) {
  INVDET_REQUIRE(!probs.empty(), ErrorCode::kShapeMismatch, "msr_score: empty posterior");
  return 1.0 - *std::max_element(probs.begin(), probs.end());
}

double msr_score(const ClassifierModel& model, const LabeledImage& image) {
  return msr_score(softmax_t(image_logits(model, image), 1.0).probs);
}

double dropout_score(const ClassifierModel& model, const LabeledImage& image, std::size_t passes,
                     std::uint64_t seed) {
  INVDET_REQUIRE(passes >= 2, ErrorCode::kInvalidArgument, "dropout_score: need K >= 2 passes");
  const auto post = stochastic_posteriors(model, image, passes, seed, 1.0);
  const std::size_t n = post.front().probs.size();
  const double k = static_cast<double>(passes);
  double total = 0.0;
  // Deviations are taken about the first pass, so identical passes give
  // exactly zero instead of rounding residue.
  for (std::size_t c = 0; c < n; ++c) {
    const double ref = post.front().probs[c];
    double m = 0.0;
    for (const auto& p : post) m += p.probs[c] - ref;
    m /= k;
    double v = 0.0;
    for (const auto& p : post) {
      const double d = p.probs[c] - ref - m;
      v += d * d;
    }
    total += v / k;
  }
  return total / static_cast<double>(n);
}

Aggregate parse_aggregate(const std::string& name) {
  if (name == "single") return Aggregate::kSingle;
  if (name == "mean") return Aggregate::kMean;
  if (name == "max") return Aggregate::kMax;
  fail(ErrorCode::kInvalidArgument, "unknown aggregation '" + name + "'");
}

double aggregate_scores(std::span<const double> scores, Aggregate mode) {
  INVDET_REQUIRE(!scores.empty(), ErrorCode::kInvalidArgument,
                 "aggregate_scores: empty score list");
  switch (mode) {
    case Aggregate::kSingle:
      INVDET_REQUIRE(scores.size() == 1, ErrorCode::kInvalidArgument,
                     "aggregate_scores: 'single' needs exactly one score");
      return scores[0];
    case Aggregate::kMean: {
      double s = 0.0;
      for (double v : scores) s += v;
      return s / static_cast<double>(scores.size());
    }
    case Aggregate::kMax:
      return *std::max_element(scores.begin(), scores.end());
  }
  return scores[0];
}

CalibrationResult calibrate_threshold(std::span<const double> negative_scores, double target_fpr) {
  INVDET_REQUIRE(!negative_scores.empty(), ErrorCode::kInvalidArgument,
                 "calibrate_threshold: empty calibration set");
  INVDET_REQUIRE(target_fpr >= 0.0, ErrorCode::kInvalidArgument,
                 "calibrate_threshold: target FPR must be >= 0");
  const std::size_t n = negative_scores.size();
  CalibrationResult r;
  r.calibration_size = n;
  r.undersized = target_fpr > 0.0 && static_cast<double>(n) < 1.0 / target_fpr;
  if (r.undersized) {
    std::cerr << "warning: calibrating at FPR " << target_fpr << " on only " << n << " scores\n";
  }
  if (target_fpr >= 1.0) {
    r.threshold = -std::numeric_limits<double>::infinity();
    r.achieved_fpr = 1.0;
    return r;
  }
  std::vector<double> s(negative_scores.begin(), negative_scores.end());
  std::sort(s.begin(), s.end());
  const auto allowed =
      static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(n) + 1e-9));
  // tau = s[n-1-allowed]; at most `allowed` scores can sit strictly above it.
  r.threshold = s[n - 1 - std::min(allowed, n - 1)];
  const auto above =
      static_cast<std::size_t>(s.end() - std::upper_bound(s.begin(), s.end(), r.threshold));
  r.achieved_fpr = static_cast<double>(above) / static_cast<double>(n);
  return r;
}

DetectorVerdict make_verdict(double score, double threshold, std::string transforms,
                             double temperature) {
  DetectorVerdict v;
  v.score = score;
  v.threshold = threshold;
  v.reject = score > threshold;
  v.transforms = std::move(transforms);
  v.temperature = temperature;
  return v;
}

}  // namespace invdet
