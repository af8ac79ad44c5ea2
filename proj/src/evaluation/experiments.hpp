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

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "attacks/attacks.hpp"
#include "core/kv_config.hpp"
#include "data/source.hpp"
#include "mlp/mlp_detector.hpp"

namespace invdet {

inline constexpr int kReportSchemaVersion = 1;

// Canned experiment suites:
//   ud-sweep         C&W over confidences k, D_KL and MSR AUROC vs distortion
//   transform-table  one C&W run, D_KL AUROC per transform
//   kd-temperature   KD attacks on G per (transform, T), bypass at the FPR
//   natural-errors   MSR, D_KL, MC-dropout and MLP AUROC on clean images
struct SuiteConfig {
  std::string suite;
  std::string id;  // output subdirectory, defaults to the suite name
  std::filesystem::path classifier;
  std::filesystem::path mlp;  // natural-errors: trained detector, empty trains one
  DatasetSpec data;
  std::size_t eval_images = 500;
  std::size_t attack_images = 100;
  std::vector<double> confidences;        // suite default when empty
  std::vector<TransformSpec> transforms;  // suite default when empty
  std::vector<double> temperatures;       // suite default when empty
  double target_fpr = 0.01;
  std::size_t histogram_bins = 30;
  std::size_t dropout_passes = 30;
  AttackConfig attack;  // targeted unless attack.targeted = false
  MlpConfig mlp_config;
  DetectorAugmentation augmentation;
  std::vector<TransformSpec> mlp_transforms;
  std::size_t top_k = 0;  // 0: min(N, 5)
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  KvConfig source;
};

// Keys: suite, experiment, classifier, mlp, eval.images, eval.attack_images,
// eval.full, k, transforms, T, fpr, eval.bins, dropout.passes,
// mlp.transforms, mlp.top_k, jobs, seed, plus the dataset, attack.* and mlp.*
// keys.
SuiteConfig suite_config(const KvConfig& kv);

// Writes <outdir>/<id>/{report.json, scores.csv, attacks.csv,
// roc_<detector>.csv, *.svg} and returns the report.
nlohmann::json run_experiment(const SuiteConfig& config, const std::filesystem::path& outdir);

// The report's "rows" recomputed from its own scores.csv and attacks.csv.
nlohmann::json recompute_rows(const std::filesystem::path& experiment_dir);

}  // namespace invdet
