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

#include <memory>
#include <string>
#include <vector>

#include "core/ops.hpp"
#include "core/tensor.hpp"
#include "data/dataset.hpp"

namespace invdet {

// A named, parameterized image transformation. Text form (CLI/config):
//   hflip | zoom:1.05 | gamma:0.6 | shift:0.5,0.5 | contrast:1.2 |
//   brightness:0.1 | gray | hblur:3
struct TransformSpec {
  enum class Kind { kHFlip, kZoom, kGamma, kShift, kContrast, kGrayscale, kHBlur, kBrightness };
  Kind kind = Kind::kHFlip;
  std::vector<double> params;

  static TransformSpec parse(const std::string& text);
  std::string to_string() const;

  static TransformSpec hflip() { return {Kind::kHFlip, {}}; }
  static TransformSpec zoom(double factor) { return {Kind::kZoom, {factor}}; }
  static TransformSpec gamma(double g) { return {Kind::kGamma, {g}}; }
  static TransformSpec shift(double dx, double dy) { return {Kind::kShift, {dx, dy}}; }
  static TransformSpec contrast(double f) { return {Kind::kContrast, {f}}; }
  static TransformSpec brightness(double b) { return {Kind::kBrightness, {b}}; }
  static TransformSpec grayscale() { return {Kind::kGrayscale, {}}; }
  static TransformSpec hblur(double w) { return {Kind::kHBlur, {w}}; }
};

// "hflip,gamma:0.6,shift:0.5,0.5" style lists. A bare number after a shift
// is taken as its second coordinate.
std::vector<TransformSpec> parse_transform_list(const std::string& text);
std::string transform_list_string(const std::vector<TransformSpec>& specs);

// A transform bound to image dimensions. Output has the input's shape and is
// clamped to [0, 1]; it is differentiable w.r.t. the input pixels.
class Transform {
 public:
  Transform(TransformSpec spec, ImageDims dims);

  // images: [B, C, H, W]
  Tensor operator()(const Tensor& images) const;
  std::vector<double> apply(const std::vector<double>& pixels) const;
  LabeledImage apply(const LabeledImage& image) const;

  const TransformSpec& spec() const { return spec_; }
  const ImageDims& dims() const { return dims_; }
  // True for the transforms that are a fixed linear map before clamping.
  bool linear() const { return map_ != nullptr || spec_.kind == TransformSpec::Kind::kContrast; }

 private:
  TransformSpec spec_;
  ImageDims dims_;
  std::shared_ptr<const SparseMatrix> map_;  // set for the linear resampling kinds
};

// The pixel operators. Each takes [B,C,H,W] and returns the same shape.
Tensor hflip(const Tensor& images);
Tensor zoom(const Tensor& images, double factor);
Tensor gamma(const Tensor& images, double g);
Tensor shift(const Tensor& images, double dx, double dy);
Tensor contrast(const Tensor& images, double factor);
Tensor brightness(const Tensor& images, double delta);
Tensor grayscale(const Tensor& images);
Tensor hblur(const Tensor& images, std::size_t width);

}  // namespace invdet
