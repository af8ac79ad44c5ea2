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
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "evaluation/experiments.hpp"
#include "evaluation/metrics.hpp"
#include "evaluation/plot.hpp"

using namespace invdet;
namespace fs = std::filesystem;

namespace {

// P(pos > neg) + P(tie) / 2 by counting every pair.
double pair_count_auroc(const std::vector<ScoredSample>& s) {
  double wins = 0, pairs = 0;
  for (const auto& p : s) {
    if (!p.positive) continue;
    for (const auto& n : s) {
      if (n.positive) continue;
      pairs += 1;
      wins += p.score > n.score ? 1.0 : p.score == n.score ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

std::vector<ScoredSample> random_samples(Rng& rng) {
  const std::size_t n = 2 + rng.below(200);
  const double levels = 1 + rng.below(30);  // coarse levels force ties
  std::vector<ScoredSample> s(n);
  for (auto& x : s) {
    x.positive = rng.bernoulli(0.4);
    x.score = std::floor(rng.uniform(0, levels) + (x.positive ? rng.uniform(0, 3) : 0));
  }
  s[0].positive = true;
  s[1].positive = false;
  return s;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("invdet_eval_test_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("AUROC examples") {
  CHECK(mann_whitney_auroc(
            labeled_scores(std::vector<double>{0.1, 0.2}, std::vector<double>{0.3, 0.4})) == 1.0);
  CHECK(mann_whitney_auroc(
            labeled_scores(std::vector<double>{0.1, 0.3}, std::vector<double>{0.2, 0.4})) == 0.75);
  CHECK(mann_whitney_auroc(
            labeled_scores(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5})) == 0.5);
  CHECK_THROWS_AS(
      mann_whitney_auroc(labeled_scores(std::vector<double>{0.1}, std::vector<double>{})), Error);
  CHECK_THROWS_AS(
      mann_whitney_auroc(labeled_scores(std::vector<double>{NAN}, std::vector<double>{1})), Error);
}

TEST_CASE("ROC curve shape") {
  const auto roc =
      roc_auroc(labeled_scores(std::vector<double>{0.1, 0.3, 0.3}, std::vector<double>{0.2, 0.4}));
  REQUIRE(roc.points.size() == 5);  // origin + four distinct scores
  CHECK(roc.points.front().fpr == 0.0);
  CHECK(roc.points.front().tpr == 0.0);
  CHECK(roc.points.back().fpr == 1.0);
  CHECK(roc.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
  }
  CHECK(roc.positives == 2);
  CHECK(roc.negatives == 3);
}

TEST_CASE("trapezoidal AUROC equals pair counting, ties included") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_samples(rng);
    const RocCurve roc = roc_auroc(s);
    const double oracle = pair_count_auroc(s);
    CHECK(trapezoid_area(roc.points) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(roc.auroc == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(mann_whitney_auroc(s) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("negating scores maps a to 1 - a") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_samples(rng);
    const double a = mann_whitney_auroc(s);
    for (auto& x : s) x.score = -x.score;
    CHECK(mann_whitney_auroc(s) == doctest::Approx(1.0 - a).epsilon(1e-15));
  }
}

TEST_CASE("bypass rate") {
  std::vector<AttackResult> r(4);
  r[0].success = r[1].success = r[2].success = true;
  const std::vector<double> scores{0.1, 0.5, 0.2, 0.0};
  CHECK(bypass_rate(r, scores, 0.3) == 0.5);  // images 0 and 2
  CHECK(bypass_rate(r, scores, -std::numeric_limits<double>::infinity()) == 0.0);
  double last = 1.0;
  for (double tau = 1.0; tau >= -0.1; tau -= 0.05) {
    const double b = bypass_rate(r, scores, tau);
    CHECK(b <= last);
    last = b;
  }
  CHECK_THROWS_AS(bypass_rate({}, {}, 0.3), Error);
  CHECK_THROWS_AS(bypass_rate(r, std::vector<double>{0.1}, 0.3), Error);
}

TEST_CASE("summaries") {
  const auto s = summarize({3, 1, 2, 10});
  CHECK(s.count == 4);
  CHECK(s.mean == 4.0);
  CHECK(s.median == 2.5);
  CHECK(std::isnan(summarize({}).mean));
}

TEST_CASE("histograms conserve counts and share bins") {
  Rng rng(3);
  std::vector<std::vector<double>> groups(3);
  for (std::size_t g = 0; g < 3; ++g) {
    groups[g].resize(50 + 20 * g);
    for (double& v : groups[g]) v = std::exp(rng.uniform(-8, 1)) * (g + 1);
  }
  groups[0][0] = 0.0;  // below the smallest positive score on the log axis
  for (bool log_x : {false, true}) {
    const Histogram h = score_histogram({"a", "b", "c"}, groups, 12, log_x);
    CHECK(h.edges.size() == 13);
    CHECK(std::is_sorted(h.edges.begin(), h.edges.end()));
    for (std::size_t g = 0; g < 3; ++g) {
      std::size_t total = 0;
      for (auto c : h.counts[g]) total += c;
      CHECK(total == groups[g].size());
    }
  }
  const Histogram flat = score_histogram({"x"}, {{0.3, 0.3, 0.3}}, 10);
  REQUIRE(flat.counts[0].size() == 1);
  CHECK(flat.counts[0][0] == 3);
  CHECK_THROWS_AS(score_histogram({"x"}, {{}}, 10), Error);
}

TEST_CASE("SVG writers produce well-formed documents") {
  const std::string line =
      line_plot_svg({{"a", {1, 2, 3}, {0.5, 0.7, NAN}}, {"b", {1, 2}, {0.2, 0.9}}},
                    {"title <&>", "x", "y", true});
  CHECK(line.rfind("<svg", 0) == 0);
  CHECK(line.find("</svg>") != std::string::npos);
  CHECK(line.find("title &lt;&amp;&gt;") != std::string::npos);
  const Histogram h = score_histogram({"a"}, {{0.1, 0.2, 0.3}}, 3);
  const std::string hist = histogram_svg(h, "h");
  CHECK(hist.find("</svg>") != std::string::npos);
}

TEST_CASE("suite configuration") {
  KvConfig kv =
      KvConfig::parse("suite = kd-temperature\nT = 1,0.15\ntransforms = hflip,shift:0.5,0.5\n");
  const SuiteConfig c = suite_config(kv);
  CHECK(c.id == "kd-temperature");
  CHECK(c.temperatures == std::vector<double>{1, 0.15});
  REQUIRE(c.transforms.size() == 2);
  CHECK(c.transforms[1].to_string() == "shift:0.5,0.5");
  CHECK(c.attack.targeted);
  kv.set("T", "0");
  CHECK_THROWS_AS(suite_config(kv), Error);
  kv.set("T", "1");
  kv.set("experiment", "../x");
  CHECK_THROWS_AS(suite_config(kv), Error);
}

TEST_CASE("experiments: reports are recomputable and reproducible") {
  TempDir tmp;
  KvConfig kv = KvConfig::parse(
      "suite = transform-table\n"
      "dataset.n = 1500\n"
      "eval.images = 120\n"
      "eval.attack_images = 5\n"
      "attack.iterations = 40\n"
      "attack.search_steps = 2\n"
      "mlp.epochs = 3\n"
      "dropout.passes = 4\n"
      "transforms = hflip,gamma:0.6\n"
      "T = 1,0.5\n");
  const SuiteConfig base = suite_config(kv);
  {
    const LoadedData data = load_data(base.data);
    ClassifierModel m = ClassifierModel::make_default(data.dims, data.num_classes, 1);
    TrainConfig tc;
    tc.epochs = 3;
    train_classifier(m, data.train, tc);
    m.to_checkpoint().save(tmp.path / "f.ivdc");
  }
  kv.set("classifier", (tmp.path / "f.ivdc").string());

  SUBCASE("missing checkpoint") {
    KvConfig bad = kv;
    bad.set("suite", "transform-table");
    bad.set("classifier", (tmp.path / "nope.ivdc").string());
    CHECK_THROWS_AS(run_experiment(suite_config(bad), tmp.path), Error);
    bad.set("suite", "bogus");
    bad.set("classifier", (tmp.path / "f.ivdc").string());
    CHECK_THROWS_AS(run_experiment(suite_config(bad), tmp.path), Error);
  }

  for (const char* suite : {"ud-sweep", "transform-table", "kd-temperature", "natural-errors"}) {
    SUBCASE(suite) {
      kv.set("suite", suite);
      if (std::string(suite) == "ud-sweep") kv.set("k", "0,2");
      const auto report = run_experiment(suite_config(kv), tmp.path);
      const fs::path dir = tmp.path / suite;
      CHECK(report["schema_version"] == kReportSchemaVersion);
      CHECK(fs::exists(dir / "report.json"));
      CHECK(fs::exists(dir / "scores.csv"));
      CHECK(fs::exists(dir / "attacks.csv"));
      for (const auto& f : report["files"]) CHECK(fs::exists(dir / f.get<std::string>()));
      for (const auto& row : report["rows"]) {
        if (row.contains("auroc") && !row["auroc"].is_null()) {
          CHECK(row["auroc"].get<double>() >= 0.0);
          CHECK(row["auroc"].get<double>() <= 1.0);
        }
      }
      const std::size_t expected_rows = std::string(suite) == "ud-sweep"          ? 4
                                        : std::string(suite) == "transform-table" ? 2
                                        : std::string(suite) == "kd-temperature"  ? 8
                                                                                  : 4;
      CHECK(report["rows"].size() == expected_rows);

      CHECK(recompute_rows(dir) == report["rows"]);

      const std::string scores = slurp(dir / "scores.csv");
      kv.set("experiment", std::string(suite) + "-again");
      const auto again = run_experiment(suite_config(kv), tmp.path);
      CHECK(again["rows"] == report["rows"]);
      CHECK(slurp(tmp.path / (std::string(suite) + "-again") / "scores.csv") == scores);
    }
  }
}
