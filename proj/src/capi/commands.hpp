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

#include "core/kv_config.hpp"

namespace invdet {

// Runs one pipeline command (train, train-detector, attack, score, eval,
// report). The configuration is echoed to outdir/config.txt before any
// work starts.
void run_command(const std::string& command, const KvConfig& config,
                 const std::filesystem::path& outdir);

}  // namespace invdet
