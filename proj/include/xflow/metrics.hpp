// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "xflow/model.hpp"
#include "xflow/numerics.hpp"

namespace xflow {

/// ((p2 - p1) / p1) · 100. Throws UndefinedBaselineError when p1 <= 0.
double relative_change(double p1, double p2);

struct ProbePoint {
  double p1 = 0.0;
  double p2 = 0.0;
  double pc = 0.0;

  static ProbePoint make(double p1, double p2) { return {p1, p2, relative_change(p1, p2)}; }
};

struct LayerPoint {
  std::size_t center = 0;
  std::size_t n = 0;
  double p1_mean = 0.0;
  double p2_mean = 0.0;
  double pc_mean = 0.0;
  double pc_sem = 0.0;  // sample stddev / sqrt(n); 0 when n == 1
};

struct LayerCurve {
  std::vector<LayerPoint> points;

  const LayerPoint& at_center(std::size_t center) const;
};

/// Per-center aggregation: p_c is computed per sample, then averaged.
LayerPoint aggregate(std::size_t center, std::span<const ProbePoint> samples);

/// Mean and standard error of a sample.
struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};
MeanSem mean_sem(std::span<const double> values);

/// probs[ℓ][i] = P^ℓ(word_ids[i]) for ℓ = 0..L, read from the hidden state of
/// `position` at every layer.
struct LensSeries {
  std::vector<std::uint32_t> word_ids;
  std::vector<std::vector<double>> probs;
};

/// Needs a trace recorded with TraceDetail::Hidden or Full.
LensSeries logit_lens_curve(const ForwardTrace& trace, std::size_t position,
                            std::span<const std::uint32_t> word_ids, const ModelWeights& weights);

/// Ids of the k largest logits of E·h, largest first; ties go to the smaller id.
std::vector<std::uint32_t> topk_words(std::span<const float> h, const ModelWeights& weights,
                                      std::size_t k = 10);

using WordSet = std::set<std::uint32_t>;

/// |a ∩ b| / |a ∪ b|; two empty sets give 1.0.
double jaccard(const WordSet& a, const WordSet& b);

struct NormPartition {
  std::vector<std::size_t> high;  // row norm > threshold
  std::vector<std::size_t> rest;
};

NormPartition partition_by_norm(const Matrix& patch_features, float threshold);

}  // namespace xflow
