// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Minimal SVG line charts for the CSV outputs. One panel per chart, stacked
// vertically; non-finite points are skipped.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stp/error.hpp"

namespace stp::plot {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Chart {
  std::string title;
  std::vector<Series> series;
  bool log_y = false;
};

namespace detail {

inline constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

inline bool usable(double v, bool log_y) { return std::isfinite(v) && (!log_y || v > 0); }

}  // namespace detail

inline std::string render_svg(const std::vector<Chart>& charts) {
  constexpr double W = 640, H = 260, ml = 70, mr = 150, mt = 30, mb = 35;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H * double(charts.size())
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t ci = 0; ci < charts.size(); ++ci) {
    const Chart& c = charts[ci];
    const double top = H * double(ci);
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    auto ty = [&](double v) { return c.log_y ? std::log10(v) : v; };
    for (const auto& s : c.series)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !detail::usable(s.y[i], c.log_y)) continue;
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
    if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double v) { return top + mt + (1 - (ty(v) - y0) / (y1 - y0)) * (H - mt - mb); };

    os << "<text x=\"" << ml << "\" y=\"" << top + 18 << "\" font-size=\"13\">" << detail::escape(c.title)
       << "</text>\n";
    os << "<rect x=\"" << ml << "\" y=\"" << top + mt << "\" width=\"" << W - ml - mr << "\" height=\""
       << H - mt - mb << "\" fill=\"none\" stroke=\"#444\"/>\n";
    auto label = [&](double v) {
      std::ostringstream l;
      l.precision(4);
      l << v;
      return l.str();
    };
    const std::string lo = c.log_y ? "1e" + label(y0) : label(y0), hi = c.log_y ? "1e" + label(y1) : label(y1);
    os << "<text x=\"" << ml - 5 << "\" y=\"" << top + H - mb << "\" text-anchor=\"end\">" << lo << "</text>\n";
    os << "<text x=\"" << ml - 5 << "\" y=\"" << top + mt + 10 << "\" text-anchor=\"end\">" << hi << "</text>\n";
    os << "<text x=\"" << ml << "\" y=\"" << top + H - mb + 15 << "\">" << label(x0) << "</text>\n";
    os << "<text x=\"" << W - mr << "\" y=\"" << top + H - mb + 15 << "\" text-anchor=\"end\">" << label(x1)
       << "</text>\n";

    for (std::size_t si = 0; si < c.series.size(); ++si) {
      const Series& s = c.series[si];
      const char* color = detail::kColors[si % std::size(detail::kColors)];
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && detail::usable(s.y[i], c.log_y)) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      os << "\"/>\n";
      os << "<text x=\"" << W - mr + 8 << "\" y=\"" << top + mt + 12 + 14 * double(si) << "\" fill=\"" << color
         << "\">" << detail::escape(s.name) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_svg(const std::filesystem::path& path, const std::vector<Chart>& charts) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << render_svg(charts);
}

}  // namespace stp::plot
