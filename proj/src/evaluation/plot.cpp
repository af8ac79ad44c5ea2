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

#include "evaluation/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/error.hpp"

namespace invdet {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  bool log_x;

  double px(double x) const {
    const double t = log_x ? (std::log10(x) - std::log10(x0)) / (std::log10(x1) - std::log10(x0))
                           : (x - x0) / (x1 - x0);
    return kLeft + t * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

void widen(double& lo, double& hi) {
  if (!(lo < hi)) {
    const double pad = std::abs(lo) > 0 ? std::abs(lo) * 0.5 : 0.5;
    lo -= pad;
    hi += pad;
  }
}

void axes_svg(std::ostringstream& os, const Frame& f, const PlotAxes& axes) {
  os << "<rect x='" << kLeft << "' y='" << kTop << "' width='" << kWidth - kLeft - kRight
     << "' height='" << kHeight - kTop - kBottom << "' fill='none' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double xv =
        f.log_x ? std::pow(10.0, std::log10(f.x0) + t * (std::log10(f.x1) - std::log10(f.x0)))
                : f.x0 + t * (f.x1 - f.x0);
    const double yv = f.y0 + t * (f.y1 - f.y0);
    os << "<text x='" << f.px(xv) << "' y='" << kHeight - kBottom + 16
       << "' font-size='11' text-anchor='middle'>" << num(xv) << "</text>\n";
    os << "<text x='" << kLeft - 6 << "' y='" << f.py(yv) + 4
       << "' font-size='11' text-anchor='end'>" << num(yv) << "</text>\n";
  }
  os << "<text x='" << (kLeft + kWidth - kRight) / 2 << "' y='" << kTop - 14
     << "' font-size='14' text-anchor='middle'>" << escape(axes.title) << "</text>\n";
  os << "<text x='" << (kLeft + kWidth - kRight) / 2 << "' y='" << kHeight - 12
     << "' font-size='12' text-anchor='middle'>" << escape(axes.x_label) << "</text>\n";
  os << "<text x='16' y='" << (kTop + kHeight - kBottom) / 2
     << "' font-size='12' text-anchor='middle' transform='rotate(-90 16 "
     << (kTop + kHeight - kBottom) / 2 << ")'>" << escape(axes.y_label) << "</text>\n";
}

void legend_svg(std::ostringstream& os, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 14 + 18 * static_cast<double>(i);
    os << "<rect x='" << kWidth - kRight + 12 << "' y='" << y - 9
       << "' width='12' height='12' fill='" << kColours[i % 8] << "'/>\n";
    os << "<text x='" << kWidth - kRight + 30 << "' y='" << y + 1 << "' font-size='11'>"
       << escape(names[i]) << "</text>\n";
  }
}

std::string open_svg() {
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
     << "' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n";
  return os.str();
}

}  // namespace

std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotAxes& axes) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    INVDET_REQUIRE(s.x.size() == s.y.size(), ErrorCode::kShapeMismatch,
                   "line_plot_svg: x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (axes.log_x && s.x[i] <= 0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = y0 = axes.log_x ? 1 : 0, x1 = y1 = 1;
  if (axes.log_x && !(x0 < x1)) x0 /= 10, x1 *= 10;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1, axes.log_x};
  std::ostringstream os;
  os << open_svg();
  axes_svg(os, f, axes);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    std::string path;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (axes.log_x && s.x[i] <= 0)) continue;
      path += (path.empty() ? "M" : " L") + num(f.px(s.x[i])) + " " + num(f.py(s.y[i]));
      os << "<circle cx='" << num(f.px(s.x[i])) << "' cy='" << num(f.py(s.y[i])) << "' r='3' fill='"
         << kColours[k % 8] << "'/>\n";
    }
    if (!path.empty()) {
      os << "<path d='" << path << "' fill='none' stroke='" << kColours[k % 8]
         << "' stroke-width='1.5'/>\n";
    }
  }
  legend_svg(os, names);
  os << "</svg>\n";
  return os.str();
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  const std::size_t bins = h.edges.size() - 1;
  std::size_t peak = 1;
  for (const auto& c : h.counts) peak = std::max(peak, *std::max_element(c.begin(), c.end()));
  double x0 = h.edges.front(), x1 = h.edges.back();
  const bool log_x = h.log_x && x0 > 0;
  if (!(x0 < x1)) {
    if (log_x)
      x0 /= 10, x1 *= 10;
    else
      widen(x0, x1);
  }
  const Frame f{x0, x1, 0.0, static_cast<double>(peak), log_x};
  std::ostringstream os;
  os << open_svg();
  axes_svg(os, f, {title, log_x ? "score (log scale)" : "score", "count", log_x});
  for (std::size_t g = 0; g < h.counts.size(); ++g) {
    std::string path = "M" + num(f.px(x0)) + " " + num(f.py(0));
    for (std::size_t b = 0; b < bins; ++b) {
      const double l = bins == 1 ? x0 : h.edges[b], r = bins == 1 ? x1 : h.edges[b + 1];
      const double y = f.py(static_cast<double>(h.counts[g][b]));
      path += " L" + num(f.px(l)) + " " + num(y) + " L" + num(f.px(r)) + " " + num(y);
    }
    path += " L" + num(f.px(x1)) + " " + num(f.py(0));
    os << "<path d='" << path << "' fill='" << kColours[g % 8] << "' fill-opacity='0.25' stroke='"
       << kColours[g % 8] << "'/>\n";
  }
  legend_svg(os, h.groups);
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  INVDET_REQUIRE(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  INVDET_REQUIRE(out.good(), ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace invdet
