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

#include "evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/error.hpp"

namespace invdet {

namespace {

void check_samples(std::span<const ScoredSample> samples, std::size_t* pos, std::size_t* neg) {
  *pos = *neg = 0;
  for (const auto& s : samples) {
    INVDET_REQUIRE(!std::isnan(s.score), ErrorCode::kDomain, "roc: NaN score");
    ++(s.positive ? *pos : *neg);
  }
  INVDET_REQUIRE(*pos > 0 && *neg > 0, ErrorCode::kInvalidArgument,
                 "roc: need both positive and negative samples");
}

}  // namespace

double mann_whitney_auroc(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  check_samples(samples, &pos, &neg);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[order[k]].positive) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

RocCurve roc_auroc(std::span<const ScoredSample> samples) {
  RocCurve roc;
  check_samples(samples, &roc.positives, &roc.negatives);
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
  const double p = static_cast<double>(roc.positives), n = static_cast<double>(roc.negatives);
  roc.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    for (; j < sorted.size() && sorted[j].score == sorted[i].score; ++j)
      ++(sorted[j].positive ? tp : fp);
    roc.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p});
    i = j;
  }
  roc.auroc = mann_whitney_auroc(samples);
  return roc;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

std::vector<ScoredSample> labeled_scores(std::span<const double> negatives,
                                         std::span<const double> positives) {
  std::vector<ScoredSample> out;
  out.reserve(negatives.size() + positives.size());
  for (double s : negatives) out.push_back({s, false});
  for (double s : positives) out.push_back({s, true});
  return out;
}

double bypass_rate(const std::vector<AttackResult>& results, std::span<const double> scores,
                   double tau) {
  INVDET_REQUIRE(!results.empty(), ErrorCode::kInvalidArgument, "bypass_rate: no attack results");
  INVDET_REQUIRE(scores.size() == results.size(), ErrorCode::kShapeMismatch,
                 "bypass_rate: one score per result required");
  std::size_t bypassed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].success && scores[i] < tau) ++bypassed;
  }
  return static_cast<double>(bypassed) / static_cast<double>(results.size());
}

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.median = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  s.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  return s;
}

Histogram score_histogram(const std::vector<std::string>& names,
                          const std::vector<std::vector<double>>& groups, std::size_t bins,
                          bool log_x) {
  INVDET_REQUIRE(names.size() == groups.size(), ErrorCode::kShapeMismatch,
                 "score_histogram: one name per group");
  INVDET_REQUIRE(bins > 0, ErrorCode::kInvalidArgument, "score_histogram: bins must be positive");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& g : groups) {
    INVDET_REQUIRE(!g.empty(), ErrorCode::kInvalidArgument, "score_histogram: empty group");
    for (double v : g) {
      INVDET_REQUIRE(std::isfinite(v), ErrorCode::kDomain, "score_histogram: non-finite score");
      hi = std::max(hi, v);
      if (!log_x || v > 0.0) lo = std::min(lo, v);
    }
  }
  Histogram h;
  h.groups = names;
  h.log_x = log_x;
  if (!(lo < hi)) {
    const double edge = std::isfinite(lo) ? lo : hi;
    h.edges = {edge, edge};
    for (const auto& g : groups) h.counts.push_back({g.size()});
    return h;
  }
  const auto coord = [&](double v) { return log_x ? std::log(v) : v; };
  const double a = coord(lo), b = coord(hi);
  for (std::size_t i = 0; i <= bins; ++i) {
    const double c = a + (b - a) * static_cast<double>(i) / static_cast<double>(bins);
    h.edges.push_back(log_x ? std::exp(c) : c);
  }
  h.edges.front() = lo;
  h.edges.back() = hi;
  for (const auto& g : groups) {
    std::vector<std::size_t> counts(bins, 0);
    for (double v : g) {
      std::size_t bin = 0;
      if (v > lo) {
        const double pos = (coord(v) - a) / (b - a) * static_cast<double>(bins);
        bin = std::min(bins - 1, static_cast<std::size_t>(pos));
      }
      ++counts[bin];
    }
    h.counts.push_back(std::move(counts));
  }
  return h;
}

}  // namespace invdet
