// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xflow/error.hpp"

namespace xflow {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 160, kTop = 40, kBottom = 48;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const Chart& chart) {
  if (chart.series.empty()) throw UsageError("chart has no series");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : chart.series) {
    if (s.x.empty()) throw UsageError("series '" + s.label + "' has no points");
    if (s.x.size() != s.y.size()) throw UsageError("series '" + s.label + "' has mismatched x/y lengths");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) {
      if (!std::isfinite(v)) throw UsageError("series '" + s.label + "' has a non-finite value");
      y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
  }
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!chart.title.empty()) {
    o << "<text x=\"" << fmt(kLeft) << "\" y=\"24\" font-size=\"14\">" << escape(chart.title) << "</text>\n";
  }
  o << "<g stroke=\"#333\" fill=\"none\">\n"
    << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop + ph) << "\" x2=\"" << fmt(kLeft + pw) << "\" y2=\""
    << fmt(kTop + ph) << "\"/>\n"
    << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
    << fmt(kTop + ph) << "\"/>\n</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(kTop + ph + 16) << "\" text-anchor=\"middle\">"
      << tick(xv) << "</text>\n"
      << "<text x=\"" << fmt(kLeft - 6) << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << fmt(kLeft + pw / 2) << "\" y=\"" << fmt(kHeight - 8) << "\" text-anchor=\"middle\">"
    << escape(chart.x_label) << "</text>\n";
  if (!chart.y_label.empty()) {
    o << "<text x=\"16\" y=\"" << fmt(kTop + ph / 2) << "\" transform=\"rotate(-90 16 " << fmt(kTop + ph / 2)
      << ")\" text-anchor=\"middle\">" << escape(chart.y_label) << "</text>\n";
  }

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i]));
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle class=\"marker\" cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 16.0 * static_cast<double>(k);
    o << "<g class=\"legend\"><line x1=\"" << fmt(kWidth - kRight + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\""
      << fmt(kWidth - kRight + 32) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/><text x=\"" << fmt(kWidth - kRight + 38) << "\" y=\"" << fmt(ly + 4) << "\">"
      << escape(s.label) << "</text></g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void emit_svg(const Chart& chart, const std::filesystem::path& path) {
  const std::string svg = render_svg(chart);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << svg;
}

ChartSeries curve_series(const LayerCurve& curve, std::string label) {
  ChartSeries s{std::move(label), {}, {}};
  for (const auto& p : curve.points) {
    s.x.push_back(static_cast<double>(p.center));
    s.y.push_back(p.pc_mean);
  }
  return s;
}

std::vector<ChartSeries> lens_series(const LensSeries& lens, const std::vector<std::string>& labels) {
  if (labels.size() != lens.word_ids.size()) throw UsageError("one label per lens word is required");
  std::vector<ChartSeries> out;
  for (std::size_t w = 0; w < lens.word_ids.size(); ++w) {
    ChartSeries s{labels[w], {}, {}};
    for (std::size_t l = 0; l < lens.probs.size(); ++l) {
      s.x.push_back(static_cast<double>(l));
      s.y.push_back(lens.probs[l][w]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace xflow
