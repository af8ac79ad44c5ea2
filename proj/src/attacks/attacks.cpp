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

#include "attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/kv_config.hpp"
#include "core/ops.hpp"
#include "core/parallel.hpp"

namespace invdet {

namespace {

constexpr double kExcluded = -1e30;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  const std::size_t n = t.dim(1);
  std::vector<std::vector<double>> out(t.dim(0));
  auto d = t.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r].assign(d.begin() + static_cast<std::ptrdiff_t>(r * n),
                  d.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  return out;
}

Tensor pixels_tensor(const std::vector<std::vector<double>>& pixels, const ImageDims& dims,
                     bool requires_grad = false) {
  std::vector<double> flat;
  flat.reserve(pixels.size() * dims.size());
  for (const auto& p : pixels) flat.insert(flat.end(), p.begin(), p.end());
  return Tensor::from({pixels.size(), dims.channels, dims.height, dims.width}, std::move(flat),
                      requires_grad);
}

void check_targets(const Dataset& images, const std::vector<std::size_t>& targets,
                   std::size_t num_classes) {
  INVDET_REQUIRE(targets.empty() || targets.size() == images.size(), ErrorCode::kInvalidArgument,
                 "attack: targets must be empty or one per image");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    INVDET_REQUIRE(targets[i] < num_classes, ErrorCode::kInvalidArgument,
                   "attack: target class out of range");
    INVDET_REQUIRE(targets[i] != images[i].label, ErrorCode::kInvalidArgument,
                   "attack: target equals the true label of image " + std::to_string(images[i].id));
  }
}

AttackResult start_result(const LabeledImage& im, std::size_t target) {
  AttackResult r;
  r.image_id = im.id;
  r.label = im.label;
  r.target = target;
  r.adversarial = im.pixels;
  return r;
}

void finish(AttackResult& r, const LabeledImage& original, const ClassifierModel& f) {
  LabeledImage adv = original;
  adv.pixels = r.adversarial;
  r.predicted = predict(f, adv);
  const Distortion d = distortion(original.pixels, r.adversarial);
  r.l2 = d.l2;
  r.linf = d.linf;
}

bool fools(const AttackResult& r) {
  return r.target == kNoTarget ? r.predicted != r.label : r.predicted == r.target;
}

// Per-image class masks for the C&W margin: `good` holds the classes the
// attack wants to win, everything else competes against them.
struct Margins {
  std::vector<std::vector<bool>> good;
};

Margins make_margins(const Dataset& images, const std::vector<std::size_t>& targets,
                     std::size_t classes, bool exclude_last) {
  Margins m;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<bool> g(classes, false);
    if (!targets.empty()) {
      g[targets[i]] = true;
    } else {
      std::fill(g.begin(), g.end(), true);
      g[images[i].label] = false;
      if (exclude_last) g[classes - 1] = false;
    }
    m.good.push_back(std::move(g));
  }
  return m;
}

// max over good classes minus max over the rest.
double margin(const std::vector<double>& z, const std::vector<bool>& good) {
  double best_good = -std::numeric_limits<double>::infinity();
  double best_bad = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < z.size(); ++c) {
    double& slot = good[c] ? best_good : best_bad;
    slot = std::max(slot, z[c]);
  }
  return best_good - best_bad;
}

bool margin_ok(double m, double k) { return m > 0.0 && m >= k; }

// KD acceptance through the standalone detector and F.
bool kd_verified(const CombinedModelG& g, const LabeledImage& original,
                 const std::vector<double>& pixels, std::size_t target, double* score) {
  LabeledImage adv = original;
  adv.pixels = pixels;
  const ClassifierModel& f = g.base();
  const std::size_t p = predict(f, adv);
  const Transform t(g.detector().transform, original.dims);
  *score = dkl_score(f, adv, t, g.detector().temperature);
  const bool fooled = target == kNoTarget ? p != original.label : p == target;
  return fooled && *score < g.detector().threshold;
}

std::vector<AttackResult> cw_impl(const LogitModel& model, const ClassifierModel& f,
                                  const Dataset& images, const std::vector<std::size_t>& targets,
                                  const AttackConfig& config, const CombinedModelG* kd) {
  INVDET_REQUIRE(config.confidence >= 0.0, ErrorCode::kInvalidArgument,
                 "cw: confidence k must be >= 0");
  INVDET_REQUIRE(config.search_steps >= 1 && config.iterations >= 1, ErrorCode::kInvalidArgument,
                 "cw: need at least one search step and iteration");
  INVDET_REQUIRE(
      config.c_min > 0.0 && config.c_min <= config.initial_c && config.initial_c <= config.c_max,
      ErrorCode::kInvalidArgument, "cw: need 0 < c_min <= initial_c <= c_max");
  check_targets(images, targets, f.num_classes());
  const std::size_t n = images.size();
  std::vector<AttackResult> results;
  for (std::size_t i = 0; i < n; ++i) {
    results.push_back(start_result(images[i], targets.empty() ? kNoTarget : targets[i]));
  }
  if (n == 0) return results;
  const ImageDims dims = images.front().dims;
  const std::size_t d = dims.size();
  const Margins masks = make_margins(images, targets, model.num_classes(), kd != nullptr);
  const double k = config.confidence;

  // Images that already satisfy the objective are left untouched.
  std::vector<bool> active(n, true);
  {
    NoGradGuard no_grad;
    std::vector<std::vector<double>> px;
    for (const auto& im : images) px.push_back(im.pixels);
    const auto z = rows_of(model.logits(pixels_tensor(px, dims)));
    for (std::size_t i = 0; i < n; ++i) {
      if (!margin_ok(margin(z[i], masks.good[i]), k)) continue;
      double score = 0.0;
      if (kd && !kd_verified(*kd, images[i], images[i].pixels, results[i].target, &score)) {
        continue;
      }
      results[i].success = true;
      results[i].detector_score = score;
      active[i] = false;
    }
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) idx.push_back(i);
  }
  const std::size_t b = idx.size();
  if (b == 0) {
    for (std::size_t i = 0; i < n; ++i) finish(results[i], images[i], f);
    return results;
  }

  // tanh-space start point and its image (the reference for the L2 term).
  std::vector<double> w0(b * d), x0(b * d);
  for (std::size_t j = 0; j < b; ++j) {
    const auto& px = images[idx[j]].pixels;
    for (std::size_t p = 0; p < d; ++p) {
      const double w = std::atanh((2.0 * px[p] - 1.0) * 0.999999);
      w0[j * d + p] = w;
      x0[j * d + p] = (std::tanh(w) + 1.0) / 2.0;
    }
  }
  const Shape shape{b, dims.channels, dims.height, dims.width};
  const Tensor w0_t = Tensor::from(shape, w0);
  const Tensor x0_t = Tensor::from(shape, x0);
  const std::size_t classes = model.num_classes();
  std::vector<double> good_mask(b * classes), bad_mask(b * classes);
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t c = 0; c < classes; ++c) {
      const bool g = masks.good[idx[j]][c];
      good_mask[j * classes + c] = g ? 0.0 : kExcluded;
      bad_mask[j * classes + c] = g ? kExcluded : 0.0;
    }
  }
  const Tensor good_t = Tensor::from({b, classes}, good_mask);
  const Tensor bad_t = Tensor::from({b, classes}, bad_mask);

  std::vector<double> c(b, config.initial_c), lo(b, 0.0), hi(b, config.c_max);
  std::vector<double> best_l2(b, std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> best(b);
  std::vector<double> best_c(b, 0.0), best_score(b, std::numeric_limits<double>::quiet_NaN());
  std::size_t total_iterations = 0;
  bool diverged = false;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  for (std::size_t step = 0; step < config.search_steps && !diverged; ++step) {
    std::vector<double> mod(b * d, 0.0), m1(b * d, 0.0), m2(b * d, 0.0);
    std::vector<bool> step_success(b, false);
    const Tensor c_t = Tensor::from({b}, c);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < config.iterations; ++it) {
      const Tensor m = Tensor::from(shape, mod, true);
      const Tensor x = mul(add(tanh(add(w0_t, m)), 1.0), 0.5);
      const Tensor diff = sub(x, x0_t);
      const Tensor l2 = sum(reshape(mul(diff, diff), {b, d}), 1);
      const Tensor z = model.logits(x);
      const Tensor best_good = max(add(z, good_t), 1);
      const Tensor best_bad = max(add(z, bad_t), 1);
      const Tensor f_loss = maximum(sub(best_bad, best_good), -k);
      const Tensor loss = sum(add(l2, mul(c_t, f_loss)));
      const double lv = loss.item();
      ++total_iterations;
      if (!std::isfinite(lv)) {
        diverged = true;
        break;
      }

      // Candidates are judged on the iterate the loss was evaluated at.
      const auto zr = rows_of(z);
      const auto xd = x.data();
      for (std::size_t j = 0; j < b; ++j) {
        if (!margin_ok(margin(zr[j], masks.good[idx[j]]), k)) continue;
        step_success[j] = true;
        if (l2[j] >= best_l2[j]) continue;
        std::vector<double> cand(xd.begin() + static_cast<std::ptrdiff_t>(j * d),
                                 xd.begin() + static_cast<std::ptrdiff_t>((j + 1) * d));
        double score = std::numeric_limits<double>::quiet_NaN();
        if (kd && !kd_verified(*kd, images[idx[j]], cand, results[idx[j]].target, &score)) {
          continue;
        }
        best_l2[j] = l2[j];
        best[j] = std::move(cand);
        best_c[j] = c[j];
        best_score[j] = score;
      }

      if (config.abort_early && config.iterations >= 10 && it % (config.iterations / 10) == 0) {
        if (lv > prev * 0.9999) break;
        prev = lv;
      }

      loss.backward();
      const auto g = m.grad();
      const double t = static_cast<double>(it + 1);
      const double corr1 = 1.0 - std::pow(beta1, t), corr2 = 1.0 - std::pow(beta2, t);
      for (std::size_t p = 0; p < mod.size(); ++p) {
        m1[p] = beta1 * m1[p] + (1 - beta1) * g[p];
        m2[p] = beta2 * m2[p] + (1 - beta2) * g[p] * g[p];
        mod[p] -= config.lr * (m1[p] / corr1) / (std::sqrt(m2[p] / corr2) + eps);
      }
    }
    for (std::size_t j = 0; j < b; ++j) {
      if (step_success[j]) {
        hi[j] = std::min(hi[j], c[j]);
        if (hi[j] < config.c_max) c[j] = (lo[j] + hi[j]) / 2.0;
      } else {
        lo[j] = std::max(lo[j], c[j]);
        c[j] = hi[j] < config.c_max ? (lo[j] + hi[j]) / 2.0 : c[j] * 10.0;
      }
      c[j] = std::clamp(c[j], config.c_min, config.c_max);
    }
  }

  for (std::size_t j = 0; j < b; ++j) {
    AttackResult& r = results[idx[j]];
    r.iterations = total_iterations;
    if (!best[j].empty()) {
      r.success = true;
      r.adversarial = std::move(best[j]);
      r.constant = best_c[j];
      r.detector_score = best_score[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    finish(results[i], images[i], f);
    if (kd && !results[i].success) {
      double score = 0.0;
      kd_verified(*kd, images[i], results[i].adversarial, results[i].target, &score);
      results[i].detector_score = score;
    }
    // UD success is re-derived from F; KD success was verified above.
    if (!kd && results[i].success) results[i].success = fools(results[i]);
  }
  return results;
}

Tensor ce_gradient_sign(const LogitModel& model, const Tensor& x,
                        const std::vector<std::size_t>& classes, double direction) {
  const Tensor xr = Tensor::from(x.shape(), x.to_vector(), true);
  const Tensor loss = mul(cross_entropy(model.logits(xr), classes),
                          direction * static_cast<double>(classes.size()));
  loss.backward();
  const auto g = xr.grad();
  std::vector<double> s(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) s[i] = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
  return Tensor::from(x.shape(), std::move(s));
}

}  // namespace

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "fgsm") return AttackKind::kFgsm;
  if (name == "pgd") return AttackKind::kPgd;
  if (name == "cw") return AttackKind::kCw;
  fail(ErrorCode::kInvalidArgument, "unknown attack kind '" + name + "' (fgsm, pgd, cw)");
}

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm:
      return "fgsm";
    case AttackKind::kPgd:
      return "pgd";
    case AttackKind::kCw:
      return "cw";
  }
  return "?";
}

Distortion distortion(std::span<const double> original, std::span<const double> adversarial) {
  INVDET_REQUIRE(original.size() == adversarial.size() && !original.empty(),
                 ErrorCode::kShapeMismatch, "distortion: images differ in size");
  double ss = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = 255.0 * (adversarial[i] - original[i]);
    ss += d * d;
    mx = std::max(mx, std::fabs(d));
  }
  return {std::sqrt(ss / static_cast<double>(original.size())), mx};
}

std::size_t random_target(std::size_t label, std::size_t num_classes, std::uint64_t seed,
                          std::uint64_t image_id) {
  INVDET_REQUIRE(num_classes >= 2 && label < num_classes, ErrorCode::kInvalidArgument,
                 "random_target: label out of range");
  Rng rng(derive_seed(seed, image_id));
  const std::size_t pick = rng.below(num_classes - 1);
  return pick >= label ? pick + 1 : pick;
}

std::vector<std::size_t> assign_targets(const Dataset& images, std::size_t num_classes,
                                        std::uint64_t seed) {
  std::vector<std::size_t> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(random_target(im.label, num_classes, seed, im.id));
  return out;
}

std::vector<AttackResult> fgsm(const LogitModel& model, const ClassifierModel& f,
                               const Dataset& images, double epsilon) {
  INVDET_REQUIRE(epsilon >= 0.0, ErrorCode::kInvalidArgument, "fgsm: epsilon must be >= 0");
  std::vector<AttackResult> results;
  if (images.empty()) return results;
  const Tensor x = batch_tensor(images);
  std::vector<std::size_t> labels;
  for (const auto& im : images) labels.push_back(im.label);
  const Tensor s = ce_gradient_sign(model, x, labels, 1.0);
  const Tensor adv = clamp(add(x, mul(s, epsilon)), 0.0, 1.0);
  const auto d = adv.data();
  const std::size_t n = images.front().dims.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    AttackResult r = start_result(images[i], kNoTarget);
    r.adversarial.assign(d.begin() + static_cast<std::ptrdiff_t>(i * n),
                         d.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    r.iterations = 1;
    finish(r, images[i], f);
    r.success = fools(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<AttackResult> pgd(const LogitModel& model, const ClassifierModel& f,
                              const Dataset& images, const std::vector<std::size_t>& targets,
                              const AttackConfig& config) {
  INVDET_REQUIRE(config.epsilon >= 0.0 && config.step > 0.0 && config.step <= config.epsilon,
                 ErrorCode::kInvalidArgument, "pgd: need 0 < step <= epsilon");
  check_targets(images, targets, f.num_classes());
  std::vector<AttackResult> results;
  if (images.empty()) return results;
  const Tensor x = batch_tensor(images);
  const auto x0 = x.to_vector();
  std::vector<double> cur = x0;
  if (config.random_start) {
    Rng rng(derive_seed(config.seed, images.front().id));
    for (std::size_t p = 0; p < cur.size(); ++p) {
      cur[p] = std::clamp(x0[p] + rng.uniform(-config.epsilon, config.epsilon), 0.0, 1.0);
    }
  }
  std::vector<std::size_t> classes;
  for (std::size_t i = 0; i < images.size(); ++i) {
    classes.push_back(targets.empty() ? images[i].label : targets[i]);
  }
  // Ascend the label loss, or descend the target loss.
  const double direction = targets.empty() ? 1.0 : -1.0;
  for (std::size_t it = 0; it < config.pgd_iterations; ++it) {
    const Tensor s = ce_gradient_sign(model, Tensor::from(x.shape(), cur), classes, direction);
    const auto sd = s.data();
    for (std::size_t p = 0; p < cur.size(); ++p) {
      const double v = cur[p] + config.step * sd[p];
      cur[p] = std::clamp(std::clamp(v, x0[p] - config.epsilon, x0[p] + config.epsilon), 0.0, 1.0);
    }
  }
  const std::size_t n = images.front().dims.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    AttackResult r = start_result(images[i], targets.empty() ? kNoTarget : targets[i]);
    r.adversarial.assign(cur.begin() + static_cast<std::ptrdiff_t>(i * n),
                         cur.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    r.iterations = config.pgd_iterations;
    finish(r, images[i], f);
    r.success = fools(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<AttackResult> cw_l2(const LogitModel& model, const ClassifierModel& f,
                                const Dataset& images, const std::vector<std::size_t>& targets,
                                const AttackConfig& config) {
  return cw_impl(model, f, images, targets, config, nullptr);
}

CombinedModelG::CombinedModelG(const ClassifierModel& f, DetectorSpec detector, double scale)
    : f_(&f),
      detector_(std::move(detector)),
      scale_(scale),
      transform_(detector_.transform, f.input_dims()) {
  INVDET_REQUIRE(scale > 0.0, ErrorCode::kInvalidArgument, "G: logit scale s must be > 0");
  INVDET_REQUIRE(detector_.temperature > 0.0, ErrorCode::kInvalidArgument,
                 "G: temperature must be > 0");
  INVDET_REQUIRE(!std::isnan(detector_.threshold), ErrorCode::kInvalidArgument,
                 "G: threshold is NaN");
}

Tensor CombinedModelG::detector_scores(const Tensor& images) const {
  return kl_divergence_logits(f_->logits(images), f_->logits(transform_(images)),
                              detector_.temperature);
}

Tensor CombinedModelG::logits(const Tensor& images) const {
  const Tensor z = f_->logits(images);
  const Tensor d = kl_divergence_logits(z, f_->logits(transform_(images)), detector_.temperature);
  const std::size_t b = z.dim(0);
  const Tensor shifted = sub(z, max(z, 1, true));
  const Tensor extra = reshape(mul(add(d, -detector_.threshold), scale_), {b, 1});
  return concat_last({shifted, extra});
}

CombinedModelG build_G(const ClassifierModel& f, const DetectorSpec& detector, double scale) {
  return CombinedModelG(f, detector, scale);
}

std::vector<AttackResult> kd_attack(const CombinedModelG& g, const Dataset& images,
                                    const std::vector<std::size_t>& targets,
                                    const AttackConfig& config) {
  return cw_impl(g, g.base(), images, targets, config, &g);
}

std::vector<AttackResult> run_attack(const ClassifierModel& f, const CombinedModelG* kd,
                                     const Dataset& images, const std::vector<std::size_t>& targets,
                                     const AttackConfig& config, std::size_t jobs) {
  INVDET_REQUIRE(config.batch >= 1, ErrorCode::kInvalidArgument, "attack: batch must be >= 1");
  INVDET_REQUIRE(targets.empty() || targets.size() == images.size(), ErrorCode::kInvalidArgument,
                 "attack: targets must be empty or one per image");
  INVDET_REQUIRE(!kd || config.kind == AttackKind::kCw, ErrorCode::kInvalidArgument,
                 "attack: the known-detector attack is C&W only");
  const std::size_t chunks = (images.size() + config.batch - 1) / config.batch;
  std::vector<std::vector<AttackResult>> parts(chunks);
  parallel_for(chunks, jobs, [&](std::size_t ch) {
    const std::size_t lo = ch * config.batch;
    const std::size_t hi = std::min(images.size(), lo + config.batch);
    const Dataset sub(images.begin() + static_cast<std::ptrdiff_t>(lo),
                      images.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<std::size_t> sub_targets;
    if (!targets.empty()) {
      sub_targets.assign(targets.begin() + static_cast<std::ptrdiff_t>(lo),
                         targets.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    if (kd) {
      parts[ch] = kd_attack(*kd, sub, sub_targets, config);
      return;
    }
    switch (config.kind) {
      case AttackKind::kFgsm:
        INVDET_REQUIRE(sub_targets.empty(), ErrorCode::kInvalidArgument, "fgsm is untargeted only");
        parts[ch] = fgsm(f, f, sub, config.epsilon);
        break;
      case AttackKind::kPgd:
        parts[ch] = pgd(f, f, sub, sub_targets, config);
        break;
      case AttackKind::kCw:
        parts[ch] = cw_l2(f, f, sub, sub_targets, config);
        break;
    }
  });
  std::vector<AttackResult> out;
  out.reserve(images.size());
  for (auto& p : parts) {
    for (auto& r : p) out.push_back(std::move(r));
  }
  return out;
}

std::vector<ManifestRow> read_attack_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  INVDET_REQUIRE(static_cast<bool>(in), ErrorCode::kIo, "cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_list(line, ',');
    if (lineno == 1 && !cells.empty() && cells[0] == "id") continue;
    INVDET_REQUIRE(cells.size() == 1 || cells.size() == 2, ErrorCode::kFormat,
                   "manifest line " + std::to_string(lineno) + ": expected id[,target]");
    ManifestRow r;
    try {
      r.id = std::stoull(cells[0]);
      if (cells.size() == 2 && !cells[1].empty()) r.target = std::stoull(cells[1]);
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, "manifest line " + std::to_string(lineno) + ": bad number");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string attack_csv_header() {
  return "id,label,target,success,predicted,l2,linf,iterations,constant,detector_score";
}

std::string attack_csv_row(const AttackResult& r) {
  std::ostringstream os;
  os << r.image_id << ',' << r.label << ','
     << (r.target == kNoTarget ? std::string("") : std::to_string(r.target)) << ','
     << (r.success ? 1 : 0) << ',' << r.predicted << ',' << fmt(r.l2) << ',' << fmt(r.linf) << ','
     << r.iterations << ',' << fmt(r.constant) << ','
     << (std::isnan(r.detector_score) ? std::string("") : fmt(r.detector_score));
  return os.str();
}

AttackResult parse_attack_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      cells.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  INVDET_REQUIRE(cells.size() == 10, ErrorCode::kFormat,
                 "attack csv: expected 10 columns in '" + line + "'");
  AttackResult r;
  try {
    r.image_id = std::stoull(cells[0]);
    r.label = std::stoull(cells[1]);
    r.target = cells[2].empty() ? kNoTarget : std::stoull(cells[2]);
    r.success = cells[3] == "1";
    r.predicted = std::stoull(cells[4]);
    r.l2 = std::stod(cells[5]);
    r.linf = std::stod(cells[6]);
    r.iterations = std::stoull(cells[7]);
    r.constant = std::stod(cells[8]);
    if (!cells[9].empty()) r.detector_score = std::stod(cells[9]);
  } catch (const std::logic_error&) {
    fail(ErrorCode::kFormat, "attack csv: bad value in '" + line + "'");
  }
  return r;
}

void write_attack_csv(const std::vector<AttackResult>& results, const std::filesystem::path& path) {
  std::ofstream out(path);
  INVDET_REQUIRE(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << attack_csv_header() << '\n';
  for (const auto& r : results) out << attack_csv_row(r) << '\n';
}

void save_adversarials(const std::vector<AttackResult>& results, const ImageDims& dims,
                       const std::filesystem::path& path) {
  const std::size_t n = results.size();
  std::vector<double> ids, labels, targets, success, pixels;
  for (const auto& r : results) {
    INVDET_REQUIRE(r.adversarial.size() == dims.size(), ErrorCode::kShapeMismatch,
                   "save_adversarials: image size mismatch");
    ids.push_back(static_cast<double>(r.image_id));
    labels.push_back(static_cast<double>(r.label));
    targets.push_back(r.target == kNoTarget ? -1.0 : static_cast<double>(r.target));
    success.push_back(r.success ? 1.0 : 0.0);
    pixels.insert(pixels.end(), r.adversarial.begin(), r.adversarial.end());
  }
  Checkpoint ck;
  ck.put("adv.ids", Tensor::from({n}, ids));
  ck.put("adv.labels", Tensor::from({n}, labels));
  ck.put("adv.targets", Tensor::from({n}, targets));
  ck.put("adv.success", Tensor::from({n}, success));
  ck.put("adv.pixels", Tensor::from({n, dims.channels, dims.height, dims.width}, pixels));
  ck.save(path);
}

AdversarialSet load_adversarials(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  const Tensor& px = ck.get("adv.pixels");
  INVDET_REQUIRE(px.rank() == 4, ErrorCode::kFormat, "adversarial file: pixels must be rank 4");
  const std::size_t n = px.dim(0);
  const ImageDims dims{px.dim(1), px.dim(2), px.dim(3)};
  const Tensor& ids = ck.get("adv.ids");
  const Tensor& labels = ck.get("adv.labels");
  const Tensor& targets = ck.get("adv.targets");
  const Tensor& success = ck.get("adv.success");
  INVDET_REQUIRE(
      ids.numel() == n && labels.numel() == n && targets.numel() == n && success.numel() == n,
      ErrorCode::kFormat, "adversarial file: inconsistent entry counts");
  AdversarialSet out;
  const auto all = px.data();
  for (std::size_t i = 0; i < n; ++i) {
    LabeledImage im;
    im.dims = dims;
    im.id = static_cast<std::uint64_t>(ids[i]);
    im.label = static_cast<std::size_t>(labels[i]);
    im.pixels.assign(all.begin() + static_cast<std::ptrdiff_t>(i * dims.size()),
                     all.begin() + static_cast<std::ptrdiff_t>((i + 1) * dims.size()));
    out.images.push_back(std::move(im));
    out.targets.push_back(targets[i] < 0 ? kNoTarget : static_cast<std::size_t>(targets[i]));
    out.success.push_back(success[i] != 0.0);
  }
  return out;
}

}  // namespace invdet
