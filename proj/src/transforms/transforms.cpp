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

#include "transforms/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/error.hpp"
#include "core/kv_config.hpp"

namespace invdet {

namespace {

using Kind = TransformSpec::Kind;

double parse_number(const std::string& s, const std::string& context) {
  KvConfig one;
  one.set("v", s);
  try {
    return one.get_double("v", 0.0);
  } catch (const Error&) {
    fail(ErrorCode::kInvalidArgument, "transform '" + context + "': bad number '" + s + "'");
  }
}

void validate(const TransformSpec& s) {
  auto need = [&](std::size_t n) {
    INVDET_REQUIRE(
        s.params.size() == n, ErrorCode::kInvalidArgument,
        "transform " + s.to_string() + ": expected " + std::to_string(n) + " parameter(s)");
  };
  switch (s.kind) {
    case Kind::kHFlip:
    case Kind::kGrayscale:
      need(0);
      break;
    case Kind::kZoom:
      need(1);
      INVDET_REQUIRE(s.params[0] > 1.0 && std::isfinite(s.params[0]), ErrorCode::kInvalidArgument,
                     "zoom factor must be > 1");
      break;
    case Kind::kGamma:
      need(1);
      INVDET_REQUIRE(s.params[0] > 0.0 && std::isfinite(s.params[0]), ErrorCode::kInvalidArgument,
                     "gamma exponent must be > 0");
      break;
    case Kind::kShift:
      need(2);
      INVDET_REQUIRE(std::isfinite(s.params[0]) && std::isfinite(s.params[1]),
                     ErrorCode::kInvalidArgument, "shift must be finite");
      break;
    case Kind::kContrast:
      need(1);
      INVDET_REQUIRE(s.params[0] > 0.0 && std::isfinite(s.params[0]), ErrorCode::kInvalidArgument,
                     "contrast factor must be > 0");
      break;
    case Kind::kBrightness:
      need(1);
      INVDET_REQUIRE(std::isfinite(s.params[0]), ErrorCode::kInvalidArgument,
                     "brightness delta must be finite");
      break;
    case Kind::kHBlur: {
      need(1);
      const double w = s.params[0];
      INVDET_REQUIRE(w >= 3 && std::floor(w) == w && static_cast<long>(w) % 2 == 1,
                     ErrorCode::kInvalidArgument, "hblur width must be an odd integer >= 3");
      break;
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Adds the bilinear weights for sampling channel plane `c` at (sy, sx) into
// row `row`, replicating edge pixels for out-of-range coordinates.
void add_bilinear(SparseMatrix& m, std::size_t row, const ImageDims& d, std::size_t c, double sy,
                  double sx) {
  const double maxy = static_cast<double>(d.height - 1);
  const double maxx = static_cast<double>(d.width - 1);
  sy = std::clamp(sy, 0.0, maxy);
  sx = std::clamp(sx, 0.0, maxx);
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, d.height - 1);
  const std::size_t x1 = std::min(x0 + 1, d.width - 1);
  const double wy = sy - static_cast<double>(y0);
  const double wx = sx - static_cast<double>(x0);
  const std::size_t base = c * d.height * d.width;
  const double w[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
  const std::size_t idx[4] = {base + y0 * d.width + x0, base + y0 * d.width + x1,
                              base + y1 * d.width + x0, base + y1 * d.width + x1};
  for (int k = 0; k < 4; ++k) {
    if (w[k] != 0.0) m.add(row, idx[k], w[k]);
  }
}

std::shared_ptr<const SparseMatrix> build_map(const TransformSpec& s, const ImageDims& d) {
  const std::size_t n = d.size();
  auto m = std::make_shared<SparseMatrix>(n, n);
  const std::size_t H = d.height, W = d.width;
  auto out_index = [&](std::size_t c, std::size_t y, std::size_t x) { return (c * H + y) * W + x; };
  switch (s.kind) {
    case Kind::kHFlip:
      for (std::size_t c = 0; c < d.channels; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x)
            m->add(out_index(c, y, x), out_index(c, y, W - 1 - x), 1.0);
      break;
    case Kind::kZoom: {
      const double f = s.params[0];
      const double cy = (static_cast<double>(H) - 1) / 2, cx = (static_cast<double>(W) - 1) / 2;
      for (std::size_t c = 0; c < d.channels; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x)
            add_bilinear(*m, out_index(c, y, x), d, c, cy + (static_cast<double>(y) - cy) / f,
                         cx + (static_cast<double>(x) - cx) / f);
      break;
    }
    case Kind::kShift: {
      const double dx = s.params[0], dy = s.params[1];
      INVDET_REQUIRE(
          std::fabs(dx) < static_cast<double>(W) && std::fabs(dy) < static_cast<double>(H),
          ErrorCode::kInvalidArgument, "shift larger than the image");
      for (std::size_t c = 0; c < d.channels; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x)
            add_bilinear(*m, out_index(c, y, x), d, c, static_cast<double>(y) - dy,
                         static_cast<double>(x) - dx);
      break;
    }
    case Kind::kGrayscale: {
      const double w = 1.0 / static_cast<double>(d.channels);
      for (std::size_t c = 0; c < d.channels; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x)
            for (std::size_t k = 0; k < d.channels; ++k)
              m->add(out_index(c, y, x), out_index(k, y, x), w);
      break;
    }
    case Kind::kHBlur: {
      const auto width = static_cast<std::size_t>(s.params[0]);
      const long r = static_cast<long>(width / 2);
      const double w = 1.0 / static_cast<double>(width);
      for (std::size_t c = 0; c < d.channels; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x)
            for (long k = -r; k <= r; ++k) {
              const long sx = std::clamp(static_cast<long>(x) + k, 0L, static_cast<long>(W) - 1);
              m->add(out_index(c, y, x), out_index(c, y, static_cast<std::size_t>(sx)), w);
            }
      break;
    }
    default:
      return nullptr;
  }
  m->finalize();
  return m;
}

}  // namespace

TransformSpec TransformSpec::parse(const std::string& text) {
  const std::string t = trim(text);
  const auto colon = t.find(':');
  const std::string name = t.substr(0, colon);
  std::vector<double> params;
  if (colon != std::string::npos) {
    for (const auto& p : split_list(t.substr(colon + 1))) params.push_back(parse_number(p, t));
  }
  TransformSpec s;
  if (name == "hflip") {
    s.kind = Kind::kHFlip;
  } else if (name == "zoom") {
    s.kind = Kind::kZoom;
  } else if (name == "gamma") {
    s.kind = Kind::kGamma;
  } else if (name == "shift") {
    s.kind = Kind::kShift;
  } else if (name == "contrast") {
    s.kind = Kind::kContrast;
  } else if (name == "gray" || name == "grayscale") {
    s.kind = Kind::kGrayscale;
  } else if (name == "hblur") {
    s.kind = Kind::kHBlur;
  } else if (name == "brightness") {
    s.kind = Kind::kBrightness;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown transform '" + name + "'");
  }
  s.params = std::move(params);
  validate(s);
  return s;
}

std::string TransformSpec::to_string() const {
  switch (kind) {
    case Kind::kHFlip:
      return "hflip";
    case Kind::kGrayscale:
      return "gray";
    case Kind::kZoom:
      return "zoom:" + (params.empty() ? "?" : fmt(params[0]));
    case Kind::kGamma:
      return "gamma:" + (params.empty() ? "?" : fmt(params[0]));
    case Kind::kContrast:
      return "contrast:" + (params.empty() ? "?" : fmt(params[0]));
    case Kind::kBrightness:
      return "brightness:" + (params.empty() ? "?" : fmt(params[0]));
    case Kind::kHBlur:
      return "hblur:" + (params.empty() ? "?" : fmt(params[0]));
    case Kind::kShift:
      return params.size() == 2 ? "shift:" + fmt(params[0]) + "," + fmt(params[1]) : "shift:?";
  }
  return "?";
}

std::vector<TransformSpec> parse_transform_list(const std::string& text) {
  std::vector<TransformSpec> out;
  std::string pending;
  for (const auto& item : split_list(text)) {
    if (item.empty()) continue;
    const bool numeric = std::isdigit(static_cast<unsigned char>(item[0])) || item[0] == '-' ||
                         item[0] == '+' || item[0] == '.';
    if (numeric) {
      INVDET_REQUIRE(!pending.empty(), ErrorCode::kInvalidArgument,
                     "transform list: stray number '" + item + "'");
      pending += "," + item;
      continue;
    }
    if (!pending.empty()) out.push_back(TransformSpec::parse(pending));
    pending = item;
  }
  if (!pending.empty()) out.push_back(TransformSpec::parse(pending));
  return out;
}

std::string transform_list_string(const std::vector<TransformSpec>& specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out += ",";
    out += specs[i].to_string();
  }
  return out;
}

Transform::Transform(TransformSpec spec, ImageDims dims) : spec_(std::move(spec)), dims_(dims) {
  validate(spec_);
  INVDET_REQUIRE(dims_.size() > 0, ErrorCode::kInvalidArgument, "transform: empty image dims");
  map_ = build_map(spec_, dims_);
}

Tensor Transform::operator()(const Tensor& images) const {
  INVDET_REQUIRE(
      images.rank() == 4 && images.dim(1) == dims_.channels && images.dim(2) == dims_.height &&
          images.dim(3) == dims_.width,
      ErrorCode::kShapeMismatch,
      "transform " + spec_.to_string() + ": unexpected input " + shape_str(images.shape()));
  Tensor out;
  switch (spec_.kind) {
    case Kind::kGamma:
      out = pow(images, spec_.params[0]);
      break;
    case Kind::kBrightness:
      out = add(images, spec_.params[0]);
      break;
    case Kind::kContrast: {
      const double f = spec_.params[0];
      const std::size_t B = images.dim(0);
      const Tensor flat = reshape(images, {B, dims_.channels, dims_.height * dims_.width});
      const Tensor m = mean(flat, 2, true);
      out = reshape(add(mul(flat, f), mul(m, 1.0 - f)), images.shape());
      break;
    }
    default:
      out = sparse_map(images, map_);
      break;
  }
  return clamp(out, 0.0, 1.0);
}

std::vector<double> Transform::apply(const std::vector<double>& pixels) const {
  INVDET_REQUIRE(pixels.size() == dims_.size(), ErrorCode::kShapeMismatch,
                 "transform " + spec_.to_string() + ": pixel count mismatch");
  NoGradGuard no_grad;
  return (*this)(Tensor::from({1, dims_.channels, dims_.height, dims_.width}, pixels)).to_vector();
}

LabeledImage Transform::apply(const LabeledImage& image) const {
  INVDET_REQUIRE(image.dims == dims_, ErrorCode::kShapeMismatch,
                 "transform " + spec_.to_string() + ": image dims mismatch");
  LabeledImage out = image;
  out.pixels = apply(image.pixels);
  return out;
}

namespace {

ImageDims dims_of(const Tensor& images) {
  INVDET_REQUIRE(images.rank() == 4, ErrorCode::kShapeMismatch,
                 "transforms expect [B,C,H,W], got " + shape_str(images.shape()));
  return {images.dim(1), images.dim(2), images.dim(3)};
}

}  // namespace

Tensor hflip(const Tensor& images) {
  return Transform(TransformSpec::hflip(), dims_of(images))(images);
}
Tensor zoom(const Tensor& images, double factor) {
  return Transform(TransformSpec::zoom(factor), dims_of(images))(images);
}
Tensor gamma(const Tensor& images, double g) {
  return Transform(TransformSpec::gamma(g), dims_of(images))(images);
}
Tensor shift(const Tensor& images, double dx, double dy) {
  return Transform(TransformSpec::shift(dx, dy), dims_of(images))(images);
}
Tensor contrast(const Tensor& images, double factor) {
  return Transform(TransformSpec::contrast(factor), dims_of(images))(images);
}
Tensor brightness(const Tensor& images, double delta) {
  return Transform(TransformSpec::brightness(delta), dims_of(images))(images);
}
Tensor grayscale(const Tensor& images) {
  return Transform(TransformSpec::grayscale(), dims_of(images))(images);
}
Tensor hblur(const Tensor& images, std::size_t width) {
  return Transform(TransformSpec::hblur(static_cast<double>(width)), dims_of(images))(images);
}

}  // namespace invdet
