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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Usage: acceptance [work_dir] [--only 1,2,...]

#include <invdet/invdet.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "detectors/detectors.hpp"
#include "evaluation/experiments.hpp"
#include "evaluation/metrics.hpp"
#include "grad_check.hpp"

using namespace invdet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Desk benchmark: 10000 shapes images, 16x16, four classes, default split.
constexpr const char* kData = "dataset.n = 10000\n";
constexpr std::size_t kAttackImages = 100;
constexpr std::size_t kKdImages = 50;
constexpr std::size_t kMonotoneImages = 50;
constexpr std::size_t kNaturalEvalImages = 2000;
// C&W settings for the KD runs, shared by both temperatures.
constexpr const char* kKdAttack =
    "attack.lr = 0.1\nattack.initial_c = 1\nattack.search_steps = 6\n";

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kKlTol = 1e-12;
constexpr double kAurocTol = 1e-9;
constexpr double kUdAuroc = 0.90;
constexpr double kTableAuroc = 0.85;
constexpr double kTableFloor = 0.70;
constexpr double kKdL2Ratio = 2.0;
constexpr double kMlpSlack = 0.01;
constexpr double kMlpFloor = 0.75;
constexpr double kAugmentGap = 0.10;

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& measured) {
  std::printf("criterion %2d %s  %s: %s\n", id, pass ? "PASS" : "FAIL", what.c_str(),
              measured.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

void note(const std::string& s) {
  std::fprintf(stderr, "[acceptance] %s\n", s.c_str());
  std::fflush(stderr);
}

// Trains a benchmark classifier through the public API, once per work dir.
fs::path classifier(const fs::path& work, const std::string& name, bool augment) {
  const fs::path dir = work / name;
  const fs::path ckpt = dir / "classifier.ivdc";
  if (fs::exists(ckpt)) return ckpt;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string cfg =
      std::string(kData) + "train.augment_flip = " + (augment ? "true" : "false") + "\n";
  if (invdet_run("train", cfg.c_str(), dir.string().c_str()) != INVDET_OK) {
    throw std::runtime_error(std::string("training failed: ") + invdet_last_error());
  }
  note("trained " + name + " in " + fmt("%.0f s", seconds_since(t0)));
  return ckpt;
}

json run_suite(const fs::path& out, const std::string& text) {
  const auto t0 = std::chrono::steady_clock::now();
  KvConfig kv = KvConfig::parse(std::string(kData) + text);
  const SuiteConfig c = suite_config(kv);
  json r = run_experiment(c, out);
  note(c.id + " finished in " + fmt("%.0f s", seconds_since(t0)));
  return r;
}

const json& find_row(const json& report, const std::string& config, const std::string& detector,
                     const std::string& transform = "", double t = 1.0) {
  for (const auto& row : report["rows"]) {
    if (row["config"] == config && row["detector"] == detector &&
        (transform.empty() || row["transform"] == transform) && row["T"].get<double>() == t) {
      return row;
    }
  }
  throw std::runtime_error("report has no row " + config + " " + detector + " " + transform);
}

double num(const json& v) { return v.is_null() ? NAN : v.get<double>(); }

// --- 1 ----------------------------------------------------------------------

void gradients() {
  Rng rng(2026);
  std::vector<testing::GradCase> cases = testing::op_cases();
  for (auto& c : testing::transform_cases()) cases.push_back(std::move(c));
  for (auto& c : testing::model_cases()) cases.push_back(std::move(c));
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    for (int i = 0; i < 100; ++i) {
      const double e = c.run(rng);
      if (!(e <= worst)) {
        worst = e;
        worst_name = c.name;
      }
    }
  }
  report(1, worst < kGradTol, "finite-difference gradients",
         std::to_string(cases.size()) + " ops/transforms x 100 instances, worst rel. err " +
             fmt("%.2e", worst) + " (" + worst_name + "), tol 1e-4");
}

// --- 2 ----------------------------------------------------------------------

void oracles() {
  Rng rng(7);
  double kl_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (std::size_t j = 0; j < n; ++j) {
      sp += (p[j] = rng.uniform() + 1e-4);
      sq += (q[j] = rng.uniform() + 1e-4);
    }
    for (std::size_t j = 0; j < n; ++j) {
      p[j] /= sp;
      q[j] /= sq;
    }
    long double direct = 0;
    for (std::size_t j = 0; j < n; ++j) {
      direct += static_cast<long double>(p[j]) * std::log(static_cast<long double>(p[j]) / q[j]);
    }
    kl_worst = std::max(kl_worst, std::fabs(kl_divergence(p, q) - static_cast<double>(direct)));
  }
  double auroc_worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.below(300);
    const double levels = 1 + rng.below(40);
    std::vector<ScoredSample> s(n);
    for (auto& x : s) {
      x.positive = rng.bernoulli(0.3);
      x.score =
          std::floor(rng.uniform(0, levels)) + (x.positive ? std::floor(rng.uniform(0, 3)) : 0.0);
    }
    s[0].positive = true;
    s[1].positive = false;
    double wins = 0, pairs = 0;
    for (const auto& a : s) {
      for (const auto& b : s) {
        if (!a.positive || b.positive) continue;
        pairs += 1;
        wins += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
      }
    }
    const double trap = trapezoid_area(roc_auroc(s).points);
    auroc_worst = std::max(auroc_worst, std::fabs(trap - wins / pairs));
  }
  report(2, kl_worst <= kKlTol && auroc_worst <= kAurocTol, "KL and AUROC oracles",
         "KL max |err| " + fmt("%.1e", kl_worst) +
             " over 1000 pairs (tol 1e-12), AUROC max |err| " + fmt("%.1e", auroc_worst) +
             " over 200 tied sets (tol 1e-9)");
}

// --- 3 ----------------------------------------------------------------------

void detector_rule(const fs::path& ckpt) {
  const ClassifierModel f = ClassifierModel::from_checkpoint(Checkpoint::load(ckpt));
  const LoadedData data = load_data(dataset_spec(KvConfig::parse(kData)));
  const Transform t(TransformSpec::hflip(), data.dims);

  // Half natural images, half uniform noise: both sides of the threshold.
  Dataset inputs(data.detector_eval.begin(), data.detector_eval.begin() + 500);
  Rng rng(3);
  for (std::size_t i = 0; i < 500; ++i) {
    LabeledImage im = inputs[i];
    for (double& p : im.pixels) p = rng.uniform();
    inputs.push_back(std::move(im));
  }
  Dataset calib;
  for (const auto& im : data.detector_train) {
    if (predict(f, im) == im.label) calib.push_back(im);
  }
  const double tau = calibrate_threshold(dkl_scores(f, calib, t, 1.0), 0.01).threshold;
  const CombinedModelG g = build_G(f, {TransformSpec::hflip(), 1.0, tau});
  const auto scores = dkl_scores(f, inputs, t, 1.0);
  NoGradGuard no_grad;
  std::size_t mismatches = 0, flagged = 0;
  const std::size_t n = f.num_classes() + 1;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto z = g.logits(image_tensor(inputs[i])).to_vector();
    const bool extra = argmax(z) == n - 1;
    flagged += extra;
    mismatches += extra != (scores[i] > tau);
  }
  report(3, mismatches == 0 && flagged > 0 && flagged < inputs.size(), "G decision rule",
         std::to_string(mismatches) + " mismatches over 1000 inputs (" + std::to_string(flagged) +
             " above tau)");
}

// --- 4, 9 -------------------------------------------------------------------

void ud_sweep(const fs::path& out, const fs::path& ckpt) {
  const json r =
      run_suite(out, "suite = ud-sweep\nclassifier = " + ckpt.string() +
                         "\neval.attack_images = " + std::to_string(kAttackImages) + "\n");
  const double dkl0 = num(find_row(r, "k=0", "dkl")["auroc"]);
  const double dkl8 = num(find_row(r, "k=8", "dkl")["auroc"]);
  const double msr0 = num(find_row(r, "k=0", "msr")["auroc"]);
  const double msr8 = num(find_row(r, "k=8", "msr")["auroc"]);
  report(4, dkl0 >= kUdAuroc && dkl8 > msr8 && msr8 < msr0, "UD detection",
         "D_KL AUROC k=0 " + fmt("%.3f", dkl0) + " (>= 0.90); k=8 D_KL " + fmt("%.3f", dkl8) +
             " vs MSR " + fmt("%.3f", msr8) + "; MSR k=0 " + fmt("%.3f", msr0) + " -> k=8 " +
             fmt("%.3f", msr8));

  // Mean L2 per k over the first 50 attacked images, from attacks.csv.
  std::ifstream in(out / "ud-sweep" / "attacks.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::vector<double>> l2;
  std::map<std::string, std::set<std::uint64_t>> ids;
  std::set<std::uint64_t> first;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const std::string config = line.substr(0, comma);
    const AttackResult a = parse_attack_csv_row(line.substr(comma + 1));
    if (config == "k=0" && first.size() < kMonotoneImages) first.insert(a.image_id);
    if (!first.count(a.image_id)) continue;
    ids[config].insert(a.image_id);
    if (a.success) l2[config].push_back(a.l2);
  }
  bool monotone = true, complete = true;
  double last = -1.0;
  std::string measured;
  for (const char* k : {"k=0", "k=2", "k=4", "k=8"}) {
    const auto s = summarize(l2[k]);
    complete = complete && ids[k].size() == kMonotoneImages;
    monotone = monotone && s.mean >= last;
    last = s.mean;
    measured +=
        std::string(k) + " " + fmt("%.3f", s.mean) + " (" + std::to_string(s.count) + " ok)  ";
  }
  report(9, monotone && complete, "confidence monotonicity", "mean L2 over 50 images: " + measured);
}

// --- 5, 10 ------------------------------------------------------------------

double transform_table(const fs::path& out, const fs::path& ckpt) {
  const json r =
      run_suite(out, "suite = transform-table\nclassifier = " + ckpt.string() +
                         "\neval.attack_images = " + std::to_string(kAttackImages) + "\n");
  bool pass = true;
  std::string measured;
  double hflip = NAN;
  for (const auto& row : r["rows"]) {
    const double a = num(row["auroc"]);
    pass = pass && a >= kTableAuroc && a >= kTableFloor;
    measured += row["transform"].get<std::string>() + " " + fmt("%.3f", a) + "  ";
    if (row["transform"] == "hflip") hflip = a;
  }
  report(5, pass && r["rows"].size() == 3, "transform table", measured + "(each >= 0.85)");
  return hflip;
}

void augmentation(const fs::path& out, const fs::path& plain, double aug_auroc) {
  const json r = run_suite(out,
                           "suite = transform-table\nexperiment = plain-hflip\ntransforms = hflip\n"
                           "classifier = " +
                               plain.string() +
                               "\neval.attack_images = " + std::to_string(kAttackImages) + "\n");
  const double plain_auroc = num(r["rows"][0]["auroc"]);
  report(10, std::fabs(plain_auroc - aug_auroc) <= kAugmentGap, "augmentation independence",
         "hflip UD AUROC with flip augmentation " + fmt("%.3f", aug_auroc) + ", without " +
             fmt("%.3f", plain_auroc) + " (|diff| <= 0.10)");
}

// --- 6, 7 -------------------------------------------------------------------

void kd(const fs::path& out, const fs::path& ckpt) {
  const json r =
      run_suite(out, std::string("suite = kd-temperature\ntransforms = hflip\nT = 1,0.15\n") +
                         kKdAttack + "classifier = " + ckpt.string() +
                         "\neval.attack_images = " + std::to_string(kKdImages) + "\n");
  const json& t1 = find_row(r, "kd hflip T=1", "dkl", "hflip", 1.0);
  const json& t015 = find_row(r, "kd hflip T=0.15", "dkl", "hflip", 0.15);
  const double m1 = num(t1["l2_median"]), m015 = num(t015["l2_median"]);
  const double b1 = num(t1["bypass"]), b015 = num(t015["bypass"]);
  report(6, m015 >= kKdL2Ratio * m1 && b015 < b1, "KD temperature effect",
         "median L2 of bypasses T=1 " + fmt("%.3f", m1) + ", T=0.15 " + fmt("%.3f", m015) +
             " (ratio " + fmt("%.2f", m015 / m1) + ", need >= 2); bypass T=1 " + fmt("%.2f", b1) +
             ", T=0.15 " + fmt("%.2f", b015) + " (need lower)");

  // Independent re-scoring of every reported bypass.
  const fs::path dir = out / "kd-temperature";
  const ClassifierModel f = ClassifierModel::from_checkpoint(Checkpoint::load(ckpt));
  std::size_t claimed = 0, verified = 0;
  for (const auto& row : r["rows"]) {
    if (row["kind"] != "kd") continue;
    const json& art = r["artifacts"][row["config"].get<std::string>()];
    const double tau = art["tau"].get<double>();
    const double t = row["T"].get<double>();
    const AdversarialSet set = load_adversarials(dir / art["adversarials"].get<std::string>());
    const Transform tr(TransformSpec::hflip(), set.images.front().dims);
    for (std::size_t i = 0; i < set.images.size(); ++i) {
      if (!set.success[i]) continue;
      ++claimed;
      const double s = dkl_score(f, set.images[i], tr, t);
      verified += s < tau && predict(f, set.images[i]) == set.targets[i];
    }
  }
  report(7, claimed > 0 && verified == claimed, "KD success re-verification",
         std::to_string(verified) + "/" + std::to_string(claimed) +
             " reported bypasses score below tau and hit the target");
}

// --- 8 ----------------------------------------------------------------------

void natural(const fs::path& out, const fs::path& ckpt) {
  const json r = run_suite(out, "suite = natural-errors\nclassifier = " + ckpt.string() +
                                    "\neval.images = " + std::to_string(kNaturalEvalImages) + "\n");
  const double mlp = num(find_row(r, "", "mlp")["auroc"]);
  const double dkl = num(find_row(r, "", "dkl", "hflip")["auroc"]);
  const double msr = num(find_row(r, "", "msr")["auroc"]);
  const std::size_t errors = r["natural_errors"].get<std::size_t>();
  report(8,
         r["eval_images"].get<std::size_t>() >= 500 && mlp >= dkl - kMlpSlack && mlp >= msr &&
             mlp >= kMlpFloor,
         "natural-error ordering",
         "AUROC MLP " + fmt("%.3f", mlp) + ", D_KL hflip " + fmt("%.3f", dkl) + ", MSR " +
             fmt("%.3f", msr) + " on " + std::to_string(r["eval_images"].get<std::size_t>()) +
             " images with " + std::to_string(errors) + " errors");
}

// --- 11 ---------------------------------------------------------------------

void determinism(const fs::path& out, const fs::path& ckpt) {
  const std::string common = "classifier = " + ckpt.string() +
                             "\neval.images = 300\neval.attack_images = 8\nk = 0,4\nT = 1,0.15\n"
                             "transforms = hflip,gamma:0.6\nmlp.epochs = 5\n";
  bool pass = true;
  std::string measured;
  for (const char* suite : {"ud-sweep", "transform-table", "kd-temperature", "natural-errors"}) {
    const std::string base = common + "suite = " + suite + "\n";
    const json a = run_suite(out, base + "experiment = " + suite + "-a\n");
    const json b = run_suite(out, base + "experiment = " + suite + "-b\n");
    const bool same = a["rows"] == b["rows"] && a["artifacts"].size() == b["artifacts"].size();
    const bool recomputed = recompute_rows(out / (std::string(suite) + "-a")) == a["rows"];
    pass = pass && same && recomputed;
    measured += std::string(suite) + (same && recomputed ? " identical" : " DIFFERS") + "  ";
  }
  report(11, pass, "determinism", measured);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      for (const auto& s : split_list(argv[++i], ',')) only.insert(std::stoi(s));
    } else {
      work = a;
    }
  }
  auto want = [&](int id) { return only.empty() || only.count(id); };
  fs::create_directories(work);
  const fs::path runs = work / "runs";

  try {
    if (want(1)) gradients();
    if (want(2)) oracles();
    std::set<int> needs_model{3, 4, 5, 6, 7, 8, 9, 10, 11};
    bool model = false;
    for (int id : needs_model) model = model || want(id);
    if (!model) return failures ? 1 : 0;
    const fs::path aug = classifier(work, "aug", true);
    if (want(3)) detector_rule(aug);
    if (want(4) || want(9)) ud_sweep(runs, aug);
    double aug_hflip = NAN;
    if (want(5) || want(10)) aug_hflip = transform_table(runs, aug);
    if (want(10)) augmentation(runs, classifier(work, "plain", false), aug_hflip);
    if (want(6) || want(7)) kd(runs, aug);
    if (want(8)) natural(runs, aug);
    if (want(11)) determinism(work / "determinism", aug);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  return failures ? 1 : 0;
}
