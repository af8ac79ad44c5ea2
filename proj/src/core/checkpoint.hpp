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
#include <map>
#include <string>

#include "core/tensor.hpp"

namespace invdet {

// Flat binary parameter container:
//   "IVDC" | u32 version | u32 count | entries...
//   entry: u32 name_len | name bytes (UTF-8) | u8 dtype | u32 rank |
//          u64 dims[rank] | little-endian payload
// dtype 0 = float32, 1 = float64. Writers always emit float64, so a
// save/load round trip is bit-exact.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;
  enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

  void put(const std::string& name, const Tensor& t);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> entries_;
};

}  // namespace invdet
