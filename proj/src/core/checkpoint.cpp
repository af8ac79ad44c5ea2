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

#include "core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace invdet {

namespace {

constexpr char kMagic[4] = {'I', 'V', 'D', 'C'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    INVDET_REQUIRE(pos_ + n <= bytes_.size(), ErrorCode::kFormat, "checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) {
  INVDET_REQUIRE(!name.empty(), ErrorCode::kInvalidArgument, "checkpoint entry needs a name");
  entries_[name] = t.detach();
}

bool Checkpoint::contains(const std::string& name) const { return entries_.count(name) != 0; }

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  INVDET_REQUIRE(it != entries_.end(), ErrorCode::kFormat,
                 "checkpoint has no entry '" + name + "'");
  return it->second;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(DType::kFloat64));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  INVDET_REQUIRE(r.take(4) == std::string(kMagic, 4), ErrorCode::kFormat,
                 "not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  INVDET_REQUIRE(version == kVersion, ErrorCode::kFormat,
                 "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.le<std::uint32_t>();
    std::string name = r.take(name_len);
    const auto dtype = r.le<std::uint8_t>();
    const auto rank = r.le<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.le<std::uint64_t>());
    std::vector<double> values(shape_numel(shape));
    if (dtype == static_cast<std::uint8_t>(DType::kFloat64)) {
      for (auto& v : values) v = std::bit_cast<double>(r.le<std::uint64_t>());
    } else if (dtype == static_cast<std::uint8_t>(DType::kFloat32)) {
      for (auto& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>());
    } else {
      fail(ErrorCode::kFormat, "unknown dtype code " + std::to_string(dtype));
    }
    ck.entries_[name] = Tensor::from(std::move(shape), std::move(values));
  }
  INVDET_REQUIRE(r.done(), ErrorCode::kFormat, "trailing bytes after checkpoint");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  INVDET_REQUIRE(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path.string());
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  INVDET_REQUIRE(static_cast<bool>(f), ErrorCode::kIo, "write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  INVDET_REQUIRE(static_cast<bool>(f), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

}  // namespace invdet
