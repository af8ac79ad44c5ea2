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

#include <stdexcept>
#include <string>

namespace invdet {

enum class ErrorCode {
  kInvalidArgument = 1,
  kShapeMismatch = 2,
  kDomain = 3,
  kIo = 4,
  kFormat = 5,
  kDivergence = 6,
  kRuntime = 7,
};

const char* error_code_name(ErrorCode code);

// All library failures are reported as invdet::Error. The code survives the
// trip across the C API as an integer status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace invdet

// The message expression is only evaluated on failure.
#define INVDET_REQUIRE(cond, code, what)         \
  do {                                           \
    if (!(cond)) ::invdet::fail((code), (what)); \
  } while (0)
