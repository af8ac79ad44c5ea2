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
#include <fstream>
#include <iterator>

#include "core/error.hpp"
#include "data/dataset.hpp"

namespace invdet {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  INVDET_REQUIRE(static_cast<bool>(f), ErrorCode::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::string& bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[pos + i]);
  }
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct IdxFile {
  std::vector<std::size_t> dims;
  std::size_t payload_offset = 0;
};

// Magic is 0x00 0x00 <type> <ndims>; only unsigned byte (0x08) is supported.
IdxFile parse_idx_header(const std::string& bytes, const std::string& what) {
  INVDET_REQUIRE(bytes.size() >= 4, ErrorCode::kFormat, what + ": truncated IDX header");
  const std::uint32_t magic = be32(bytes, 0);
  INVDET_REQUIRE((magic & 0xffff0000u) == 0 && ((magic >> 8) & 0xff) == 0x08, ErrorCode::kFormat,
                 what + ": bad IDX magic");
  const std::size_t ndims = magic & 0xff;
  INVDET_REQUIRE(ndims >= 1 && ndims <= 4, ErrorCode::kFormat, what + ": unsupported IDX rank");
  INVDET_REQUIRE(bytes.size() >= 4 + 4 * ndims, ErrorCode::kFormat,
                 what + ": truncated IDX header");
  IdxFile f;
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    f.dims.push_back(be32(bytes, 4 + 4 * i));
    total *= f.dims.back();
  }
  f.payload_offset = 4 + 4 * ndims;
  INVDET_REQUIRE(bytes.size() - f.payload_offset >= total, ErrorCode::kFormat,
                 what + ": truncated IDX payload");
  INVDET_REQUIRE(bytes.size() - f.payload_offset == total, ErrorCode::kFormat,
                 what + ": trailing bytes after IDX payload");
  return f;
}

}  // namespace

Dataset read_idx_images(const std::filesystem::path& images) {
  const std::string bytes = read_file(images);
  const IdxFile f = parse_idx_header(bytes, images.string());
  INVDET_REQUIRE(f.dims.size() == 3 || f.dims.size() == 4, ErrorCode::kFormat,
                 images.string() + ": image IDX needs 3 or 4 dims");
  ImageDims dims;
  if (f.dims.size() == 3) {
    dims = {1, f.dims[1], f.dims[2]};
  } else {
    dims = {f.dims[1], f.dims[2], f.dims[3]};
  }
  const std::size_t n = f.dims[0];
  Dataset out(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + f.payload_offset);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].dims = dims;
    out[i].id = i;
    out[i].pixels.resize(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
      out[i].pixels[k] = static_cast<double>(p[i * dims.size() + k]) / 255.0;
    }
  }
  return out;
}

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes) {
  Dataset out = read_idx_images(images);
  const std::string bytes = read_file(labels);
  const IdxFile f = parse_idx_header(bytes, labels.string());
  INVDET_REQUIRE(f.dims.size() == 1, ErrorCode::kFormat,
                 labels.string() + ": label IDX needs 1 dim");
  INVDET_REQUIRE(
      f.dims[0] == out.size(), ErrorCode::kFormat,
      "label count " + std::to_string(f.dims[0]) + " != image count " + std::to_string(out.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto label = static_cast<unsigned char>(bytes[f.payload_offset + i]);
    INVDET_REQUIRE(label < num_classes, ErrorCode::kFormat,
                   labels.string() + ": label " + std::to_string(label) + " out of range");
    out[i].label = label;
  }
  return out;
}

void write_idx(const Dataset& images, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
  INVDET_REQUIRE(!images.empty(), ErrorCode::kInvalidArgument, "write_idx: empty dataset");
  const ImageDims dims = images.front().dims;
  std::string img;
  const bool gray = dims.channels == 1;
  put_be32(img, 0x00000800u | (gray ? 3u : 4u));
  put_be32(img, static_cast<std::uint32_t>(images.size()));
  if (!gray) put_be32(img, static_cast<std::uint32_t>(dims.channels));
  put_be32(img, static_cast<std::uint32_t>(dims.height));
  put_be32(img, static_cast<std::uint32_t>(dims.width));
  std::string lab;
  put_be32(lab, 0x00000801u);
  put_be32(lab, static_cast<std::uint32_t>(images.size()));
  for (const auto& im : images) {
    INVDET_REQUIRE(im.dims == dims, ErrorCode::kShapeMismatch, "write_idx: mixed image dims");
    INVDET_REQUIRE(im.label < 256, ErrorCode::kInvalidArgument, "write_idx: label exceeds a byte");
    for (double v : im.pixels) {
      img.push_back(static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    lab.push_back(static_cast<char>(im.label));
  }
  for (const auto& [path, data] : {std::pair{image_path, img}, std::pair{label_path, lab}}) {
    std::ofstream f(path, std::ios::binary);
    INVDET_REQUIRE(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path.string());
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
}

Dataset read_cifar10(const std::filesystem::path& path) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  constexpr std::size_t kRecord = 1 + kPixels;
  const std::string bytes = read_file(path);
  INVDET_REQUIRE(!bytes.empty() && bytes.size() % kRecord == 0, ErrorCode::kFormat,
                 path.string() + ": size " + std::to_string(bytes.size()) +
                     " is not a whole number of 3073-byte CIFAR-10 records");
  const std::size_t n = bytes.size() / kRecord;
  Dataset out(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = p + i * kRecord;
    INVDET_REQUIRE(rec[0] < 10, ErrorCode::kFormat,
                   path.string() + ": label " + std::to_string(rec[0]) + " out of range");
    out[i].dims = {3, 32, 32};
    out[i].label = rec[0];
    out[i].id = i;
    out[i].pixels.resize(kPixels);
    for (std::size_t k = 0; k < kPixels; ++k) {
      out[i].pixels[k] = static_cast<double>(rec[1 + k]) / 255.0;
    }
  }
  return out;
}

}  // namespace invdet
