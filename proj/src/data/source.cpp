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

#include "data/source.hpp"

#include "core/error.hpp"

namespace invdet {

DatasetSpec dataset_spec(const KvConfig& config) {
  DatasetSpec s;
  s.kind = config.get("dataset", s.kind);
  INVDET_REQUIRE(s.kind == "shapes" || s.kind == "idx" || s.kind == "cifar10",
                 ErrorCode::kInvalidArgument,
                 "dataset must be shapes, idx or cifar10, got '" + s.kind + "'");
  s.shapes.n = static_cast<std::size_t>(config.get_u64("dataset.n", s.shapes.n));
  s.shapes.num_classes =
      static_cast<std::size_t>(config.get_u64("dataset.classes", s.shapes.num_classes));
  s.shapes.image_size =
      static_cast<std::size_t>(config.get_u64("dataset.size", s.shapes.image_size));
  s.shapes.channels =
      static_cast<std::size_t>(config.get_u64("dataset.channels", s.shapes.channels));
  s.shapes.seed = config.get_u64("dataset.seed", s.shapes.seed);
  s.images = config.get("dataset.images", "");
  s.labels = config.get("dataset.labels", "");
  for (const auto& f : split_list(config.get("dataset.files", ""))) s.files.emplace_back(f);
  s.num_classes = static_cast<std::size_t>(config.get_u64("dataset.classes", s.num_classes));
  s.fractions = config.get_doubles("split.fractions", s.fractions);
  s.split_seed = config.get_u64("split.seed", s.split_seed);
  return s;
}

LoadedData load_data(const DatasetSpec& spec) {
  Dataset all;
  LoadedData out;
  if (spec.kind == "shapes") {
    all = generate_shapes(spec.shapes);
    out.num_classes = spec.shapes.num_classes;
  } else if (spec.kind == "idx") {
    INVDET_REQUIRE(!spec.images.empty() && !spec.labels.empty(), ErrorCode::kInvalidArgument,
                   "idx dataset needs dataset.images and dataset.labels");
    all = read_idx(spec.images, spec.labels, spec.num_classes);
    out.num_classes = spec.num_classes;
  } else {
    INVDET_REQUIRE(!spec.files.empty(), ErrorCode::kInvalidArgument,
                   "cifar10 dataset needs dataset.files");
    for (const auto& f : spec.files) {
      // Ids continue across batch files.
      for (auto& im : read_cifar10(f)) {
        im.id = all.size();
        all.push_back(std::move(im));
      }
    }
    out.num_classes = 10;
  }
  INVDET_REQUIRE(!all.empty(), ErrorCode::kInvalidArgument, "dataset is empty");
  out.dims = all.front().dims;
  out.split = split_dataset(ids_of(all), spec.fractions, spec.split_seed);
  out.train = select_ids(all, out.split.train);
  out.detector_train = select_ids(all, out.split.detector_train);
  out.detector_eval = select_ids(all, out.split.detector_eval);
  return out;
}

}  // namespace invdet
