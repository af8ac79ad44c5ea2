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
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "classifier/classifier.hpp"
#include "detectors/detectors.hpp"
#include "transforms/transforms.hpp"

namespace invdet {

enum class AttackKind { kFgsm, kPgd, kCw };
AttackKind parse_attack_kind(const std::string& name);
std::string attack_kind_name(AttackKind kind);

struct AttackConfig {
  AttackKind kind = AttackKind::kCw;
  bool targeted = false;
  double confidence = 0.0;  // k

  // fgsm / pgd
  double epsilon = 0.05;
  double step = 0.01;
  std::size_t pgd_iterations = 40;
  bool random_start = false;

  // C&W
  std::size_t search_steps = 9;
  std::size_t iterations = 1000;  // per binary-search step
  double initial_c = 1e-3;
  double c_min = 1e-3;
  double c_max = 1e10;
  double lr = 0.01;
  bool abort_early = true;

  // Images attacked together in one optimization batch. Results depend on
  // the batch composition (early abort is per batch), never on thread count.
  std::size_t batch = 10;
  std::uint64_t seed = 1;
};

struct Distortion {
  double l2 = 0.0;    // sqrt(mean((255 d)^2))
  double linf = 0.0;  // 255 max |d|
};
Distortion distortion(std::span<const double> original, std::span<const double> adversarial);

inline constexpr std::size_t kNoTarget = std::numeric_limits<std::size_t>::max();

struct AttackResult {
  std::uint64_t image_id = 0;
  std::size_t label = 0;
  std::size_t target = kNoTarget;
  std::vector<double> adversarial;  // pixels in [0, 1]; the original when unsuccessful
  bool success = false;
  std::size_t predicted = 0;  // F's class on the adversarial image
  double l2 = 0.0;
  double linf = 0.0;
  std::size_t iterations = 0;
  double constant = 0.0;                                             // C&W: c of the best solution
  double detector_score = std::numeric_limits<double>::quiet_NaN();  // KD only
};

// Uniform over the N - 1 classes other than the label, seeded per image id.
std::size_t random_target(std::size_t label, std::size_t num_classes, std::uint64_t seed,
                          std::uint64_t image_id);
std::vector<std::size_t> assign_targets(const Dataset& images, std::size_t num_classes,
                                        std::uint64_t seed);

// Batch attacks on `model`. targets may be empty for untargeted attacks.
// F is the classifier whose prediction is recorded in each result (the
// attacked model may be G built on top of it).
std::vector<AttackResult> fgsm(const LogitModel& model, const ClassifierModel& f,
                               const Dataset& images, double epsilon);
std::vector<AttackResult> pgd(const LogitModel& model, const ClassifierModel& f,
                              const Dataset& images, const std::vector<std::size_t>& targets,
                              const AttackConfig& config);
std::vector<AttackResult> cw_l2(const LogitModel& model, const ClassifierModel& f,
                                const Dataset& images, const std::vector<std::size_t>& targets,
                                const AttackConfig& config);

// Detector description for G and the KD attack.
struct DetectorSpec {
  TransformSpec transform = TransformSpec::hflip();
  double temperature = 1.0;
  double threshold = std::numeric_limits<double>::infinity();  // tau
};

// The (N+1)-class combined model. Logit N+1 is max_i Z_i + s (D_KL - tau).
// Logits are returned shifted by -max_i Z_i (a per-image constant, so
// softmax, argmax and every logit difference are unchanged); the shift makes
// "argmax is N+1 exactly when D_KL > tau" hold in floating point too. Ties
// go to the lower index, so D_KL == tau is not flagged.
class CombinedModelG : public LogitModel {
 public:
  CombinedModelG(const ClassifierModel& f, DetectorSpec detector, double scale = 1.0);

  Tensor logits(const Tensor& images) const override;
  std::size_t num_classes() const override { return f_->num_classes() + 1; }

  // Differentiable D_KL per image, [B].
  Tensor detector_scores(const Tensor& images) const;

  const ClassifierModel& base() const { return *f_; }
  const DetectorSpec& detector() const { return detector_; }
  double scale() const { return scale_; }

 private:
  const ClassifierModel* f_;
  DetectorSpec detector_;
  double scale_;
  Transform transform_;
};

CombinedModelG build_G(const ClassifierModel& f, const DetectorSpec& detector, double scale = 1.0);

// Targeted C&W on G. Success additionally requires F to predict the target
// and the standalone detector to score the image strictly below tau; the
// final detector score is recorded. Targets must be real classes of F.
std::vector<AttackResult> kd_attack(const CombinedModelG& g, const Dataset& images,
                                    const std::vector<std::size_t>& targets,
                                    const AttackConfig& config);

// Splits images into config.batch chunks and runs them on `jobs` threads.
// kd == nullptr attacks F directly.
std::vector<AttackResult> run_attack(const ClassifierModel& f, const CombinedModelG* kd,
                                     const Dataset& images, const std::vector<std::size_t>& targets,
                                     const AttackConfig& config, std::size_t jobs = 1);

// CSV manifests. The input manifest has columns id[,target].
struct ManifestRow {
  std::uint64_t id = 0;
  std::size_t target = kNoTarget;
};
std::vector<ManifestRow> read_attack_manifest(const std::filesystem::path& path);
// id,label,target,success,predicted,l2,linf,iterations,constant,detector_score
std::string attack_csv_header();
std::string attack_csv_row(const AttackResult& r);
// Inverse of attack_csv_row; the adversarial pixels are left empty.
AttackResult parse_attack_csv_row(const std::string& line);
void write_attack_csv(const std::vector<AttackResult>& results, const std::filesystem::path& path);

// Adversarial pixels in full precision (checkpoint container format).
void save_adversarials(const std::vector<AttackResult>& results, const ImageDims& dims,
                       const std::filesystem::path& path);
struct AdversarialSet {
  Dataset images;  // labels are the true labels of the source images
  std::vector<std::size_t> targets;
  std::vector<bool> success;
};
AdversarialSet load_adversarials(const std::filesystem::path& path);

}  // namespace invdet
