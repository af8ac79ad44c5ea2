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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "data/dataset.hpp"

namespace invdet {

namespace {

std::vector<std::uint64_t> shuffled(const std::vector<std::uint64_t>& ids, std::uint64_t seed) {
  std::vector<std::uint64_t> order = ids;
  std::sort(order.begin(), order.end());
  INVDET_REQUIRE(std::adjacent_find(order.begin(), order.end()) == order.end(),
                 ErrorCode::kInvalidArgument, "split: duplicate ids");
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  return order;
}

std::size_t take_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

DatasetSplit split_dataset(const std::vector<std::uint64_t>& ids,
                           const std::vector<double>& fractions, std::uint64_t seed) {
  INVDET_REQUIRE(fractions.size() == 3, ErrorCode::kInvalidArgument,
                 "split_dataset: need three fractions (train, detector-train, detector-eval)");
  double total = 0.0;
  for (double f : fractions) {
    INVDET_REQUIRE(f > 0.0, ErrorCode::kInvalidArgument,
                   "split_dataset: fractions must be positive");
    total += f;
  }
  INVDET_REQUIRE(total <= 1.0 + 1e-12, ErrorCode::kInvalidArgument,
                 "split_dataset: fractions sum to more than 1");
  const auto order = shuffled(ids, seed);
  const std::size_t n = order.size();
  const std::size_t n_train = take_count(fractions[0], n);
  const std::size_t n_det = std::min(take_count(fractions[1], n), n - n_train);
  DatasetSplit s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.detector_train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                          order.begin() + static_cast<std::ptrdiff_t>(n_train + n_det));
  s.detector_eval.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_det), order.end());
  return s;
}

DatasetSplit split_heldout(const std::vector<std::uint64_t>& ids, double detector_train_fraction,
                           std::uint64_t seed) {
  INVDET_REQUIRE(detector_train_fraction > 0.0 && detector_train_fraction < 1.0,
                 ErrorCode::kInvalidArgument, "split_heldout: fraction must be in (0, 1)");
  const auto order = shuffled(ids, seed);
  const std::size_t n_det = take_count(detector_train_fraction, order.size());
  DatasetSplit s;
  s.seed = seed;
  s.detector_train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_det));
  s.detector_eval.assign(order.begin() + static_cast<std::ptrdiff_t>(n_det), order.end());
  return s;
}

std::vector<std::uint64_t> ids_of(const Dataset& images) {
  std::vector<std::uint64_t> ids;
  ids.reserve(images.size());
  for (const auto& im : images) ids.push_back(im.id);
  return ids;
}

Dataset select_ids(const Dataset& images, const std::vector<std::uint64_t>& ids) {
  std::unordered_map<std::uint64_t, std::size_t> where;
  for (std::size_t i = 0; i < images.size(); ++i) where[images[i].id] = i;
  Dataset out;
  out.reserve(ids.size());
  for (auto id : ids) {
    auto it = where.find(id);
    INVDET_REQUIRE(it != where.end(), ErrorCode::kInvalidArgument,
                   "select_ids: unknown id " + std::to_string(id));
    out.push_back(images[it->second]);
  }
  return out;
}

Tensor batch_tensor(const std::vector<const LabeledImage*>& images) {
  INVDET_REQUIRE(!images.empty(), ErrorCode::kInvalidArgument, "batch_tensor: no images");
  const ImageDims dims = images.front()->dims;
  std::vector<double> data;
  data.reserve(images.size() * dims.size());
  for (const auto* im : images) {
    INVDET_REQUIRE(im->dims == dims, ErrorCode::kShapeMismatch, "batch_tensor: mixed image dims");
    data.insert(data.end(), im->pixels.begin(), im->pixels.end());
  }
  return Tensor::from({images.size(), dims.channels, dims.height, dims.width}, std::move(data));
}

Tensor batch_tensor(const Dataset& images) {
  std::vector<const LabeledImage*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& im : images) ptrs.push_back(&im);
  return batch_tensor(ptrs);
}

Tensor image_tensor(const LabeledImage& image) {
  return Tensor::from({1, image.dims.channels, image.dims.height, image.dims.width}, image.pixels);
}

}  // namespace invdet
