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
#include <numbers>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "data/dataset.hpp"

namespace invdet {

namespace {

enum class Family { kDisk, kSquare, kTriangle, kPlus, kRing, kDiamond, kX, kFrame, kHBar, kVBar };

// Inside test in shape-local coordinates u, v in units of the shape radius.
bool inside(Family f, double u, double v) {
  const double au = std::fabs(u), av = std::fabs(v);
  switch (f) {
    case Family::kDisk:
      return u * u + v * v <= 1.0;
    case Family::kSquare:
      return au <= 0.8 && av <= 0.8;
    case Family::kTriangle:
      // Upright isosceles triangle, apex at v = -1, base at v = 0.8.
      return v <= 0.8 && v >= -1.0 && au <= 0.5 * (v + 1.0);
    case Family::kPlus:
      return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case Family::kRing: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.45;
    }
    case Family::kDiamond:
      return au + av <= 1.0;
    case Family::kX:
      return std::fabs(au - av) <= 0.3 && au <= 0.9 && av <= 0.9;
    case Family::kFrame:
      return au <= 0.9 && av <= 0.9 && (au >= 0.5 || av >= 0.5);
    case Family::kHBar:
      return au <= 1.0 && av <= 0.4;
    case Family::kVBar:
      return au <= 0.4 && av <= 1.0;
  }
  return false;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

Dataset generate_shapes(const ShapesConfig& config) {
  INVDET_REQUIRE(
      config.num_classes >= 2 && config.num_classes <= 10, ErrorCode::kInvalidArgument,
      "generate_shapes: num_classes must be in [2, 10], got " + std::to_string(config.num_classes));
  INVDET_REQUIRE(config.image_size >= 16, ErrorCode::kInvalidArgument,
                 "generate_shapes: image_size must be >= 16");
  INVDET_REQUIRE(config.channels == 1 || config.channels == 3, ErrorCode::kInvalidArgument,
                 "generate_shapes: channels must be 1 or 3");

  const std::size_t S = config.image_size;
  const ImageDims dims{config.channels, S, S};
  Dataset out;
  out.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    Rng rng(derive_seed(config.seed, i));
    LabeledImage img;
    img.dims = dims;
    img.label = i % config.num_classes;
    img.id = config.first_id + i;
    const auto family = static_cast<Family>(img.label);

    const double size = static_cast<double>(S);
    const double radius = size * rng.uniform(0.18, 0.34);
    const double cx = rng.uniform(radius, size - radius);
    const double cy = rng.uniform(radius, size - radius);
    // Small rotation jitter keeps families distinct but not trivially so.
    const double angle = rng.uniform(-0.25, 0.25);
    const double ca = std::cos(angle), sa = std::sin(angle);

    double bg[3], fg[3];
    const double contrast = rng.uniform(0.3, 0.7) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      bg[c] = rng.uniform(0.2, 0.8);
    }
    const double tint = rng.uniform(0.0, 0.3);
    for (std::size_t c = 0; c < 3; ++c) {
      fg[c] = std::clamp(bg[c] + contrast + rng.uniform(-tint, tint), 0.0, 1.0);
    }
    const double noise = rng.uniform(0.02, 0.1);

    img.pixels.resize(dims.size());
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        // 2x2 supersampling for soft edges.
        double cover = 0.0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const double px = static_cast<double>(x) + 0.25 + 0.5 * sx - cx;
            const double py = static_cast<double>(y) + 0.25 + 0.5 * sy - cy;
            const double u = (ca * px + sa * py) / radius;
            const double v = (-sa * px + ca * py) / radius;
            if (inside(family, u, v)) cover += 0.25;
          }
        }
        for (std::size_t c = 0; c < config.channels; ++c) {
          const double base = config.channels == 1 ? (bg[0] + bg[1] + bg[2]) / 3.0 * (1 - cover) +
                                                         (fg[0] + fg[1] + fg[2]) / 3.0 * cover
                                                   : bg[c] * (1 - cover) + fg[c] * cover;
          img.pixels[(c * S + y) * S + x] = quantize(base + noise * rng.normal());
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace invdet
