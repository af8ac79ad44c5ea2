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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "core/error.hpp"
#include "evaluation/metrics.hpp"
#include "mlp/mlp_detector.hpp"

using namespace invdet;

namespace {

std::vector<double> random_logits(Rng& rng, std::size_t n) {
  std::vector<double> z(n);
  for (double& v : z) v = rng.uniform(-5, 5);
  return z;
}

// Synthetic detector-training data: errors have a small top-1/top-2 gap on
// the original block and a reordered transformed block.
void synthetic(Rng& rng, std::size_t n, std::vector<InvarianceFeature>& feats,
               std::vector<int>& labels) {
  for (std::size_t i = 0; i < n; ++i) {
    const bool error = rng.bernoulli(0.2);
    std::vector<double> z = random_logits(rng, 5);
    const std::size_t top = argmax(z);
    z[top] += error ? 0.2 : 4.0;
    std::vector<double> zt = z;
    if (error) std::swap(zt[top], zt[(top + 1) % 5]);
    for (double& v : zt) v += rng.uniform(-0.3, 0.3);
    feats.push_back(build_feature(z, {zt}, 5, i));
    labels.push_back(error ? 1 : -1);
  }
}

MlpConfig quick_config() {
  MlpConfig c;
  c.epochs = 20;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("feature reorders every block by the original ranking") {
  const auto f = build_feature(std::vector<double>{1, 3, 2}, {{0.5, 2.5, 2.0}}, 2);
  CHECK(f.values == std::vector<double>{3, 2, 2.5, 2.0});
  CHECK(f.top_k == 2);
  CHECK(f.num_transforms == 1);
}

TEST_CASE("feature with no transforms is the sorted, truncated logit vector") {
  const auto f = build_feature(std::vector<double>{0.2, 5, -1, 3}, {}, 3);
  CHECK(f.values == std::vector<double>{5, 3, 0.2});
}

TEST_CASE("descending order is stable on ties") {
  CHECK(descending_order(std::vector<double>{1, 3, 3, 0}) == std::vector<std::size_t>{1, 2, 0, 3});
}

TEST_CASE("feature does not depend on class labels") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.below(8);
    const auto z = random_logits(rng, n);
    const std::vector<std::vector<double>> zt{random_logits(rng, n), random_logits(rng, n)};
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    auto permute = [&](const std::vector<double>& v) {
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i) out[perm[i]] = v[i];
      return out;
    };
    const std::size_t k = std::min<std::size_t>(n, 5);
    CHECK(build_feature(z, zt, k).values ==
          build_feature(permute(z), {permute(zt[0]), permute(zt[1])}, k).values);
  }
}

TEST_CASE("feature blocks share one permutation; full width reconstructs the logits") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    const auto z = random_logits(rng, n);
    const std::vector<std::vector<double>> zt{random_logits(rng, n), random_logits(rng, n)};
    const auto f = build_feature(z, zt, n);
    REQUIRE(f.values.size() == 3 * n);
    CHECK(std::is_sorted(f.values.begin(), f.values.begin() + n, std::greater<>()));
    const auto order = descending_order(z);
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& src = b == 0 ? z : zt[b - 1];
      std::vector<double> back(n);
      for (std::size_t j = 0; j < n; ++j) back[order[j]] = f.values[b * n + j];
      CHECK(back == src);
    }
  }
}

TEST_CASE("feature arguments are validated") {
  CHECK_THROWS_AS(build_feature(std::vector<double>{1, 2}, {}, 3), Error);
  CHECK_THROWS_AS(build_feature(std::vector<double>{1, 2}, {{1, 2, 3}}, 2), Error);
  CHECK_THROWS_AS(build_feature(std::vector<double>{1, 2}, {}, 0), Error);
}

TEST_CASE("labels, weights and defaults") {
  CHECK(error_label(2, 3) == 1);
  CHECK(error_label(3, 3) == -1);
  std::vector<int> labels(90, -1);
  labels.insert(labels.end(), 10, 1);
  const ClassWeights w = inverse_frequency_weights(labels);
  CHECK(w.error / w.correct == doctest::Approx(9.0));
  CHECK((90 * w.correct + 10 * w.error) / 100 == doctest::Approx(1.0));
  CHECK(default_top_k(4) == 4);
  CHECK(default_top_k(10) == 5);
  CHECK(transform_list_string(default_mlp_transforms()) ==
        "hflip,gamma:0.6,contrast:1.2,gray,hblur:3");
}

TEST_CASE("zero output layer gives score one half") {
  MlpModel m(6, MlpConfig{});
  auto params = m.parameters();
  for (std::size_t k = params.size() - 2; k < params.size(); ++k)
    std::fill(params[k].mutable_data().begin(), params[k].mutable_data().end(), 0.0);
  CHECK(mlp_score(m, std::vector<double>{1, 2, 3, 4, 5, 6}) == 0.5);
}

TEST_CASE("training learns a separable problem and is reproducible") {
  Rng rng(3);
  std::vector<InvarianceFeature> feats, test;
  std::vector<int> labels, test_labels;
  synthetic(rng, 600, feats, labels);
  synthetic(rng, 300, test, test_labels);

  MlpTrainReport report;
  const MlpModel a = train_mlp(feats, labels, quick_config(), &report);
  CHECK(report.errors + report.corrects == 600);
  CHECK(report.epoch_loss.back() < report.epoch_loss.front());

  std::vector<ScoredSample> scored;
  bool in_range = true;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double s = mlp_score(a, test[i]);
    in_range = in_range && s > 0.0 && s < 1.0;
    scored.push_back({s, test_labels[i] == 1});
  }
  CHECK(in_range);
  CHECK(mann_whitney_auroc(scored) > 0.95);

  const MlpModel b = train_mlp(feats, labels, quick_config());
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].to_vector() == pb[i].to_vector());
}

TEST_CASE("eval-mode scores are frozen and survive a checkpoint") {
  Rng rng(4);
  std::vector<InvarianceFeature> feats;
  std::vector<int> labels;
  synthetic(rng, 200, feats, labels);
  MlpConfig c = quick_config();
  c.epochs = 3;
  const MlpModel m = train_mlp(feats, labels, c);
  const double first = mlp_score(m, feats[0]);
  for (std::size_t i = 1; i < 50; ++i) mlp_score(m, feats[i]);
  CHECK(mlp_score(m, feats[0]) == first);

  // Batch scoring matches one-at-a-time scoring.
  std::vector<double> rows;
  for (std::size_t i = 0; i < 4; ++i)
    rows.insert(rows.end(), feats[i].values.begin(), feats[i].values.end());
  const Tensor out = m.forward_eval(Tensor::from({4, feats[0].values.size()}, rows));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(1.0 / (1.0 + std::exp(-out[i])) ==
          doctest::Approx(mlp_score(m, feats[i])).epsilon(1e-14));

  const MlpModel back =
      MlpModel::from_checkpoint(Checkpoint::deserialize(m.to_checkpoint().serialize()));
  CHECK(mlp_score(back, feats[3]) == mlp_score(m, feats[3]));
  CHECK(back.input_size() == m.input_size());
}

TEST_CASE("training needs both classes and matching sizes") {
  std::vector<InvarianceFeature> feats(3, build_feature(std::vector<double>{1, 2}, {}, 2));
  CHECK_THROWS_AS(train_mlp(feats, {1, 1, 1}, MlpConfig{}), Error);
  CHECK_THROWS_AS(train_mlp(feats, {1, -1}, MlpConfig{}), Error);
  MlpModel m(4, MlpConfig{});
  CHECK_THROWS_AS(mlp_score(m, std::vector<double>{1, 2}), Error);
}

TEST_CASE("image features run the classifier on every transform") {
  ShapesConfig sc;
  sc.n = 3;
  const Dataset d = generate_shapes(sc);
  const ClassifierModel f = ClassifierModel::make_default(d[0].dims, 4, 1);
  std::vector<Transform> ts;
  for (const auto& s : default_mlp_transforms()) ts.emplace_back(s, d[0].dims);
  const auto feat = image_feature(f, d[1], ts, 3);
  CHECK(feat.values.size() == 6 * 3);
  CHECK(feat.image_id == d[1].id);
  std::vector<std::vector<double>> zt;
  for (const auto& t : ts) zt.push_back(image_logits(f, t.apply(d[1])));
  CHECK(feat.values == build_feature(image_logits(f, d[1]), zt, 3).values);
  CHECK(dataset_features(f, d, ts, 3)[1].values == feat.values);
}
