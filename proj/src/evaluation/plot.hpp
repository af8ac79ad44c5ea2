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
#include <vector>

#include "evaluation/metrics.hpp"

namespace invdet {

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

struct PlotAxes {
  std::string title, x_label, y_label;
  bool log_x = false;
};

// Minimal SVG line chart with markers and a legend.
std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotAxes& axes);
// Overlaid step histograms, one colour per group.
std::string histogram_svg(const Histogram& histogram, const std::string& title);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace invdet
