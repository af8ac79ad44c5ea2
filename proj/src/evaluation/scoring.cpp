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

#include "evaluation/scoring.hpp"

#include <algorithm>

#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "detectors/detectors.hpp"

namespace invdet {

namespace {

constexpr std::size_t kChunk = 64;

// fn(lo, hi) handles images [lo, hi).
template <typename Fn>
void chunked(std::size_t n, std::size_t jobs, Fn fn) {
  parallel_for((n + kChunk - 1) / kChunk, jobs,
               [&](std::size_t c) { fn(c * kChunk, std::min(n, (c + 1) * kChunk)); });
}

template <typename T>
std::vector<T> slice(const std::vector<T>& v, std::size_t lo, std::size_t hi) {
  return std::vector<T>(v.begin() + static_cast<std::ptrdiff_t>(lo),
                        v.begin() + static_cast<std::ptrdiff_t>(hi));
}

}  // namespace

std::vector<std::vector<double>> parallel_logits(const ClassifierModel& f, const Dataset& images,
                                                 std::size_t jobs) {
  std::vector<std::vector<double>> out(images.size());
  chunked(images.size(), jobs, [&](std::size_t lo, std::size_t hi) {
    auto rows = batch_logits(f, slice(images, lo, hi));
    std::move(rows.begin(), rows.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
  });
  return out;
}

std::vector<double> parallel_dkl(const ClassifierModel& f, const Dataset& images,
                                 const std::vector<std::vector<double>>& logits,
                                 const Transform& transform, double temperature, std::size_t jobs) {
  std::vector<double> out(images.size());
  chunked(images.size(), jobs, [&](std::size_t lo, std::size_t hi) {
    const auto s =
        dkl_scores(f, slice(images, lo, hi), slice(logits, lo, hi), transform, temperature);
    std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
  });
  return out;
}

std::vector<double> parallel_dropout(const ClassifierModel& f, const Dataset& images,
                                     std::size_t passes, std::uint64_t seed, std::size_t jobs) {
  std::vector<double> out(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) {
    out[i] = dropout_score(f, images[i], passes, derive_seed(seed, images[i].id));
  });
  return out;
}

std::vector<double> parallel_mlp(const ClassifierModel& f, const MlpModel& mlp,
                                 const Dataset& images, const std::vector<Transform>& transforms,
                                 std::size_t top_k, std::size_t jobs) {
  std::vector<double> out(images.size());
  chunked(images.size(), jobs, [&](std::size_t lo, std::size_t hi) {
    const auto features = dataset_features(f, slice(images, lo, hi), transforms, top_k);
    for (std::size_t i = 0; i < features.size(); ++i) out[lo + i] = mlp_score(mlp, features[i]);
  });
  return out;
}

std::vector<double> msr_scores(const std::vector<std::vector<double>>& logits) {
  std::vector<double> out;
  out.reserve(logits.size());
  for (const auto& z : logits) out.push_back(msr_score(softmax_t(z).probs));
  return out;
}

}  // namespace invdet
