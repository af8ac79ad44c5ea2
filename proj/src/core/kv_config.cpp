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

#include "core/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/error.hpp"

namespace invdet {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    INVDET_REQUIRE(eq != std::string::npos, ErrorCode::kFormat,
                   "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    INVDET_REQUIRE(!key.empty(), ErrorCode::kFormat,
                   "config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  INVDET_REQUIRE(static_cast<bool>(f), ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KvConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  INVDET_REQUIRE(it != values_.end(), ErrorCode::kInvalidArgument,
                 "missing config key '" + key + "'");
  return it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  INVDET_REQUIRE(ec == std::errc() && p == s.data() + s.size(), ErrorCode::kInvalidArgument,
                 "config key '" + key + "': not a number: " + s);
  return v;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  INVDET_REQUIRE(ec == std::errc() && p == s.data() + s.size(), ErrorCode::kInvalidArgument,
                 "config key '" + key + "': not an integer: " + s);
  return v;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  INVDET_REQUIRE(ec == std::errc() && p == s.data() + s.size(), ErrorCode::kInvalidArgument,
                 "config key '" + key + "': not an unsigned integer: " + s);
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  fail(ErrorCode::kInvalidArgument, "config key '" + key + "': not a boolean: " + s);
}

std::vector<double> KvConfig::get_doubles(const std::string& key,
                                          std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  KvConfig one;
  for (const auto& item : split_list(get(key))) {
    one.set("v", item);
    out.push_back(one.get_double("v", 0.0));
  }
  return out;
}

std::string KvConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace invdet
