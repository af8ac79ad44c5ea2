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

#include <vector>

#include "classifier/classifier.hpp"
#include "mlp/mlp_detector.hpp"
#include "transforms/transforms.hpp"

namespace invdet {

// Batch scoring split into fixed chunks over `jobs` threads; results do not
// depend on the thread count.
std::vector<std::vector<double>> parallel_logits(const ClassifierModel& f, const Dataset& images,
                                                 std::size_t jobs);
std::vector<double> parallel_dkl(const ClassifierModel& f, const Dataset& images,
                                 const std::vector<std::vector<double>>& logits,
                                 const Transform& transform, double temperature, std::size_t jobs);
// Image i uses the dropout stream derive_seed(seed, id).
std::vector<double> parallel_dropout(const ClassifierModel& f, const Dataset& images,
                                     std::size_t passes, std::uint64_t seed, std::size_t jobs);
std::vector<double> parallel_mlp(const ClassifierModel& f, const MlpModel& mlp,
                                 const Dataset& images, const std::vector<Transform>& transforms,
                                 std::size_t top_k, std::size_t jobs);
std::vector<double> msr_scores(const std::vector<std::vector<double>>& logits);

}  // namespace invdet
