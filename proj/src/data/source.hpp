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
#include <string>
#include <vector>

#include "core/kv_config.hpp"
#include "data/dataset.hpp"

namespace invdet {

// Where images come from and how they are partitioned. Read from config keys
//   dataset        shapes | idx | cifar10
//   dataset.n, dataset.classes, dataset.size, dataset.channels, dataset.seed
//   dataset.images, dataset.labels   (idx)
//   dataset.files                    (cifar10, comma-separated batches)
//   split.fractions                  train, detector-train, detector-eval
//   split.seed
struct DatasetSpec {
  std::string kind = "shapes";
  ShapesConfig shapes{10000, 4, 16, 3, 1, 0};
  std::filesystem::path images, labels;
  std::vector<std::filesystem::path> files;
  std::size_t num_classes = 10;  // idx / cifar10
  std::vector<double> fractions = {0.6, 0.2, 0.2};
  std::uint64_t split_seed = 1;
};

DatasetSpec dataset_spec(const KvConfig& config);

struct LoadedData {
  std::size_t num_classes = 0;
  ImageDims dims;
  DatasetSplit split;
  Dataset train, detector_train, detector_eval;
};

LoadedData load_data(const DatasetSpec& spec);

}  // namespace invdet
