// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xflow/metrics.hpp"

namespace xflow {

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label = "layer";
  std::string y_label;
  std::vector<ChartSeries> series;
};

/// Standalone SVG line chart: one polyline and legend entry per series, a
/// circle marker per point. Throws UsageError when there are no series or a
/// series has no points or mismatched x/y lengths.
std::string render_svg(const Chart& chart);

void emit_svg(const Chart& chart, const std::filesystem::path& path);

/// p_c% against center layer.
ChartSeries curve_series(const LayerCurve& curve, std::string label);

/// One series per word of a lens series; labels name the words.
std::vector<ChartSeries> lens_series(const LensSeries& lens, const std::vector<std::string>& labels);

}  // namespace xflow
