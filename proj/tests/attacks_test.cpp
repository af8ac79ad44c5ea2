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
#include "attacks/attacks.hpp"

#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "core/error.hpp"

using namespace invdet;
namespace fs = std::filesystem;

namespace {

Dataset shapes(std::size_t n, std::uint64_t seed, std::uint64_t first_id = 0) {
  ShapesConfig c;
  c.n = n;
  c.seed = seed;
  c.first_id = first_id;
  return generate_shapes(c);
}

const ClassifierModel& trained_model() {
  static const ClassifierModel model = [] {
    ClassifierModel m = ClassifierModel::make_default({3, 16, 16}, 4, 3);
    TrainConfig tc;
    tc.epochs = 6;
    tc.lr_steps = {5};
    train_classifier(m, shapes(2400, 21), tc);
    return m;
  }();
  return model;
}

Dataset correct_images(std::size_t n) {
  Dataset out;
  for (auto& im : shapes(4 * n, 99, 100000)) {
    if (out.size() < n && predict(trained_model(), im) == im.label) out.push_back(im);
  }
  return out;
}

// Two-pixel, two-class linear classifier Z(x) = (x0 - b, b - x0), built
// through the checkpoint format as flatten + dense.
ClassifierModel linear_model(double b) {
  Checkpoint ck;
  ck.put("meta", Tensor::from({4}, {1, 1, 2, 2}));
  ck.put("arch", Tensor::from({2, 5}, {3, 1, 0, 2, 0,     // flatten
                                       4, 1, 0, 2, 0}));  // dense
  ck.put("layer1.weight", Tensor::from({2, 2}, {1, -1, 0, 0}));
  ck.put("layer1.bias", Tensor::from({2}, {-b, b}));
  return ClassifierModel::from_checkpoint(ck);
}

LabeledImage two_pixels(double x0, double x1, std::size_t label) {
  return {{1, 1, 2}, {x0, x1}, label, 0};
}

// Distance from x to the hyperplane where target margin reaches k, measured
// with the 0-255 per-pixel L2 used for reporting.
double projection_l2(double x0, double b, double k) {
  // Z1 - Z0 = 2 (b - x0) >= k  <=>  x0 <= b - k / 2.
  const double delta = x0 - (b - k / 2);
  return 255.0 * std::sqrt(delta * delta / 2.0);
}

AttackConfig cw_config(double k = 0.0) {
  AttackConfig c;
  c.kind = AttackKind::kCw;
  c.targeted = true;
  c.confidence = k;
  c.search_steps = 6;
  c.iterations = 300;
  c.initial_c = 0.1;
  c.lr = 0.05;
  return c;
}

}  // namespace

TEST_CASE("distortion is reported on the 0-255 scale") {
  const Distortion d =
      distortion(std::vector<double>{0, 0, 0, 0}, std::vector<double>{0.1, 0, 0, -0.2});
  CHECK(d.linf == doctest::Approx(51.0));
  CHECK(d.l2 == doctest::Approx(255.0 * std::sqrt((0.01 + 0.04) / 4)));
  CHECK_THROWS_AS(distortion(std::vector<double>{0}, std::vector<double>{0, 1}), Error);
}

TEST_CASE("random targets exclude the label and are reproducible") {
  std::vector<int> hist(5);
  for (std::uint64_t id = 0; id < 2000; ++id) {
    const std::size_t t = random_target(2, 5, 7, id);
    CHECK(t != 2);
    CHECK(t < 5);
    CHECK(random_target(2, 5, 7, id) == t);
    hist[t]++;
  }
  for (int c : {0, 1, 3, 4}) CHECK(hist[c] > 400);
}

TEST_CASE("C&W on a linear classifier matches the hyperplane projection") {
  const ClassifierModel f = linear_model(0.5);
  const Dataset x{two_pixels(0.9, 0.3, 0)};
  for (double k : {0.0, 0.4}) {
    const auto r = cw_l2(f, f, x, {1}, cw_config(k));
    REQUIRE(r[0].success);
    const double oracle = projection_l2(0.9, 0.5, k);
    INFO("k = " << k << ", attack L2 " << r[0].l2 << ", projection " << oracle);
    CHECK(r[0].l2 >= oracle * (1 - 1e-9));
    CHECK(r[0].l2 <= oracle * 1.05);
    CHECK(r[0].predicted == 1);
    // The second pixel does not affect the logits and must stay put.
    CHECK(std::fabs(r[0].adversarial[1] - 0.3) * 255 < 0.05 * oracle);
  }
}

TEST_CASE("an image already past the margin is left untouched") {
  const ClassifierModel f = linear_model(0.5);
  const Dataset x{two_pixels(0.2, 0.3, 0)};  // Z1 - Z0 = 0.6
  const auto r = cw_l2(f, f, x, {1}, cw_config(0.5));
  CHECK(r[0].success);
  CHECK(r[0].l2 == 0.0);
  CHECK(r[0].adversarial == x[0].pixels);
  // A larger confidence demands a real perturbation.
  const auto r2 = cw_l2(f, f, x, {1}, cw_config(0.8));
  CHECK(r2[0].success);
  CHECK(r2[0].l2 > 0.0);
}

TEST_CASE("attack arguments are validated") {
  const ClassifierModel f = linear_model(0.5);
  const Dataset x{two_pixels(0.9, 0.3, 0)};
  CHECK_THROWS_AS(cw_l2(f, f, x, {0}, cw_config()), Error);  // target == label
  CHECK_THROWS_AS(cw_l2(f, f, x, {2}, cw_config()), Error);  // no such class
  CHECK_THROWS_AS(cw_l2(f, f, x, {1}, cw_config(-1)), Error);
  AttackConfig p;
  p.step = 0.1;
  p.epsilon = 0.05;
  CHECK_THROWS_AS(pgd(f, f, x, {}, p), Error);  // step > epsilon
}

TEST_CASE("FGSM with zero budget returns the input") {
  const auto& f = trained_model();
  const Dataset x = shapes(20, 5, 500000);
  const auto r = fgsm(f, f, x, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(r[i].adversarial == x[i].pixels);
    CHECK(r[i].success == (predict(f, x[i]) != x[i].label));
  }
}

TEST_CASE("FGSM and PGD on the shapes classifier") {
  const auto& f = trained_model();
  const Dataset x = correct_images(60);
  REQUIRE(x.size() == 60);
  const double eps = 0.05;
  const auto rf = fgsm(f, f, x, eps);
  std::size_t fgsm_success = 0;
  bool linf_ok = true, in_box = true;
  for (const auto& r : rf) {
    fgsm_success += r.success;
    linf_ok = linf_ok && r.linf <= 255 * eps + 1e-9;
    for (double p : r.adversarial) in_box = in_box && p >= 0.0 && p <= 1.0;
  }
  MESSAGE("FGSM eps=0.05 success " << fgsm_success << "/60");
  CHECK(fgsm_success >= 30);
  CHECK(linf_ok);
  CHECK(in_box);

  AttackConfig pc;
  pc.kind = AttackKind::kPgd;
  pc.epsilon = eps;
  pc.step = 0.01;
  pc.pgd_iterations = 20;
  const auto rp = pgd(f, f, x, {}, pc);
  std::size_t pgd_success = 0;
  for (const auto& r : rp) {
    pgd_success += r.success;
    linf_ok = linf_ok && r.linf <= 255 * eps + 1e-9;
  }
  MESSAGE("PGD success " << pgd_success << "/60");
  CHECK(pgd_success >= fgsm_success);
  CHECK(linf_ok);
}

TEST_CASE("one PGD step without random start is FGSM") {
  const auto& f = trained_model();
  const Dataset x = shapes(10, 6, 600000);
  AttackConfig pc;
  pc.epsilon = 0.03;
  pc.step = 0.03;
  pc.pgd_iterations = 1;
  const auto rp = pgd(f, f, x, {}, pc);
  const auto rf = fgsm(f, f, x, 0.03);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(rp[i].adversarial == rf[i].adversarial);
}

TEST_CASE("reported distortion is recomputed exactly from the images") {
  const auto& f = trained_model();
  const Dataset x = correct_images(4);
  AttackConfig c = cw_config();
  const auto targets = assign_targets(x, 4, 3);
  const auto r = cw_l2(f, f, x, targets, c);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Distortion d = distortion(x[i].pixels, r[i].adversarial);
    CHECK(d.l2 == r[i].l2);
    CHECK(d.linf == r[i].linf);
    if (r[i].success) CHECK(r[i].predicted == targets[i]);
    LabeledImage adv = x[i];
    adv.pixels = r[i].adversarial;
    CHECK(predict(f, adv) == r[i].predicted);
  }
}

TEST_CASE("combined model G flags exactly the images above the threshold") {
  const auto& f = trained_model();
  const Dataset x = shapes(200, 8, 700000);
  const Transform t(TransformSpec::hflip(), x[0].dims);
  auto scores = dkl_scores(f, x, t, 1.0);
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double tau = sorted[100];
  for (double s : {0.5, 1.0, 7.0}) {
    const CombinedModelG g = build_G(f, {TransformSpec::hflip(), 1.0, tau}, s);
    CHECK(g.num_classes() == 5);
    NoGradGuard no_grad;
    const Tensor z = g.logits(batch_tensor(x));
    std::size_t mismatches = 0, g_disagree = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::vector<double> row(z.data().begin() + i * 5, z.data().begin() + (i + 1) * 5);
      const bool flagged = argmax(row) == 4;
      mismatches += flagged != (scores[i] > tau);
      if (scores[i] < tau) {
        g_disagree += argmax(std::vector<double>(row.begin(), row.begin() + 4)) != predict(f, x[i]);
      }
    }
    CHECK(mismatches == 0);
    CHECK(g_disagree == 0);
  }
}

TEST_CASE("a score exactly at the threshold is not flagged") {
  const auto& f = trained_model();
  const auto im = shapes(1, 9, 800000)[0];
  const double s = dkl_score(f, im, Transform(TransformSpec::hflip(), im.dims), 0.5);
  const CombinedModelG g = build_G(f, {TransformSpec::hflip(), 0.5, s});
  NoGradGuard no_grad;
  const Tensor z = g.logits(image_tensor(im));
  CHECK(argmax(z.to_vector()) != 4);
}

TEST_CASE("constant classifier never reaches the extra class") {
  ClassifierModel f = ClassifierModel::make_default({3, 16, 16}, 4, 1);
  auto params = f.parameters();
  for (std::size_t k = params.size() - 2; k < params.size(); ++k)
    std::fill(params[k].mutable_data().begin(), params[k].mutable_data().end(), 0.0);
  const Dataset x = shapes(20, 10);
  const CombinedModelG g = build_G(f, {TransformSpec::hflip(), 1.0, 1e-6});
  NoGradGuard no_grad;
  const Tensor z = g.logits(batch_tensor(x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(argmax(std::vector<double>(z.data().begin() + i * 5, z.data().begin() + (i + 1) * 5)) !=
          4);
  }
}

TEST_CASE("KD attack: verified bypasses, and UD behaviour without a threshold") {
  const auto& f = trained_model();
  const Dataset x = correct_images(6);
  const auto targets = assign_targets(x, 4, 11);
  const AttackConfig c = cw_config();

  // Threshold from the clean images: the median score.
  const Transform t(TransformSpec::hflip(), x[0].dims);
  auto clean = dkl_scores(f, correct_images(40), t, 1.0);
  std::sort(clean.begin(), clean.end());
  const double tau = clean[clean.size() / 2];
  const CombinedModelG g = build_G(f, {TransformSpec::hflip(), 1.0, tau});
  const auto kd = kd_attack(g, x, targets, c);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::isfinite(kd[i].detector_score));
    if (!kd[i].success) continue;
    LabeledImage adv = x[i];
    adv.pixels = kd[i].adversarial;
    CHECK(dkl_score(f, adv, t, 1.0) < tau);
    CHECK(dkl_score(f, adv, t, 1.0) == kd[i].detector_score);
    CHECK(predict(f, adv) == targets[i]);
  }

  const CombinedModelG open =
      build_G(f, {TransformSpec::hflip(), 1.0, std::numeric_limits<double>::infinity()});
  const auto kd_open = kd_attack(open, x, targets, c);
  const auto ud = cw_l2(f, f, x, targets, c);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(kd_open[i].success == ud[i].success);
    CHECK(kd_open[i].l2 == doctest::Approx(ud[i].l2).epsilon(1e-6));
  }
  CHECK_THROWS_AS(kd_attack(g, x, std::vector<std::size_t>(x.size(), 4), c), Error);
}

TEST_CASE("batched attacks do not depend on the thread count") {
  const auto& f = trained_model();
  const Dataset x = correct_images(8);
  const auto targets = assign_targets(x, 4, 2);
  AttackConfig c = cw_config();
  c.iterations = 50;
  c.search_steps = 2;
  c.batch = 3;
  const auto a = run_attack(f, nullptr, x, targets, c, 1);
  const auto b = run_attack(f, nullptr, x, targets, c, 3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(a[i].adversarial == b[i].adversarial);
    CHECK(a[i].success == b[i].success);
  }
}

TEST_CASE("attack CSV rows and adversarial files round trip") {
  AttackResult r;
  r.image_id = 17;
  r.label = 2;
  r.target = 3;
  r.success = true;
  r.predicted = 3;
  r.l2 = 1.0 / 3.0;
  r.linf = 12.75;
  r.iterations = 900;
  r.constant = 0.0123;
  r.detector_score = 0.25;
  r.adversarial = {0.1, 0.2, 0.3};
  const AttackResult back = parse_attack_csv_row(attack_csv_row(r));
  CHECK(back.image_id == 17);
  CHECK(back.target == 3);
  CHECK(back.l2 == r.l2);
  CHECK(back.detector_score == 0.25);
  CHECK(back.success);
  AttackResult untargeted;
  const AttackResult u = parse_attack_csv_row(attack_csv_row(untargeted));
  CHECK(u.target == kNoTarget);
  CHECK(std::isnan(u.detector_score));
  CHECK_THROWS_AS(parse_attack_csv_row("1,2,3"), Error);

  const fs::path dir =
      fs::temp_directory_path() / ("invdet_attacks_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  save_adversarials({r}, {1, 1, 3}, dir / "a.adv");
  const AdversarialSet set = load_adversarials(dir / "a.adv");
  REQUIRE(set.images.size() == 1);
  CHECK(set.images[0].pixels == r.adversarial);
  CHECK(set.images[0].id == 17);
  CHECK(set.images[0].label == 2);
  CHECK(set.targets[0] == 3);
  CHECK(set.success[0]);

  std::ofstream(dir / "m.csv") << "id,target\n5,1\n9\n";
  const auto rows = read_attack_manifest(dir / "m.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].target == 1);
  CHECK(rows[1].id == 9);
  CHECK(rows[1].target == kNoTarget);
  fs::remove_all(dir);
}
