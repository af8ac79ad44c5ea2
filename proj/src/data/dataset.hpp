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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/tensor.hpp"

namespace invdet {

struct ImageDims {
  std::size_t channels = 0, height = 0, width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ImageDims&) const = default;
};

// One labeled example. Pixels are channel-planar [C][H][W] in [0, 1].
struct LabeledImage {
  ImageDims dims;
  std::vector<double> pixels;
  std::size_t label = 0;
  std::uint64_t id = 0;
};

using Dataset = std::vector<LabeledImage>;

// Stacks images into a [B, C, H, W] tensor. All images must share dims.
Tensor batch_tensor(const Dataset& images);
Tensor batch_tensor(const std::vector<const LabeledImage*>& images);
Tensor image_tensor(const LabeledImage& image);  // [1, C, H, W]

// Synthetic shape classification: each class is one shape family (disk,
// square, triangle, plus, ring, diamond, x, frame, hbar, vbar) drawn with
// random position, scale, colours, contrast and noise. Labels cycle
// 0..N-1, so n divisible by N yields exact balance. Pixels are quantized to
// 8-bit levels. Deterministic in (n, num_classes, image_size, seed).
struct ShapesConfig {
  std::size_t n = 1000;
  std::size_t num_classes = 4;
  std::size_t image_size = 16;
  std::size_t channels = 3;
  std::uint64_t seed = 1;
  std::uint64_t first_id = 0;
};
Dataset generate_shapes(const ShapesConfig& config);

// IDX (MNIST-style) reader/writer. Image files are unsigned-byte IDX with 3
// dims (N, H, W) or 4 dims (N, C, H, W); label files have 1 dim.
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 10);
Dataset read_idx_images(const std::filesystem::path& images);
void write_idx(const Dataset& images, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

// CIFAR-10 binary batch: records of 1 label byte + 3072 channel-planar bytes.
Dataset read_cifar10(const std::filesystem::path& path);

// Disjoint partitions of a source set of ids.
struct DatasetSplit {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> detector_train;
  std::vector<std::uint64_t> detector_eval;
};

// fractions = {train, detector_train, detector_eval}, each positive with
// sum <= 1. The first two partitions get floor(f * n) ids; the remainder
// goes to detector_eval so the partitions cover the source set.
DatasetSplit split_dataset(const std::vector<std::uint64_t>& ids,
                           const std::vector<double>& fractions, std::uint64_t seed);

// Held-out pool split for the learned detector: detector_train gets
// floor(fraction * n) ids (default 0.2), detector_eval the rest.
DatasetSplit split_heldout(const std::vector<std::uint64_t>& ids, double detector_train_fraction,
                           std::uint64_t seed);

std::vector<std::uint64_t> ids_of(const Dataset& images);
// Images whose id is in ids, in the order of ids.
Dataset select_ids(const Dataset& images, const std::vector<std::uint64_t>& ids);

}  // namespace invdet
