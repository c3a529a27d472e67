// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xflow/error.hpp"

namespace xflow {

double relative_change(double p1, double p2) {
  if (!(p1 > 0.0)) throw UndefinedBaselineError("relative change needs a positive baseline");
  return (p2 - p1) / p1 * 100.0;
}

const LayerPoint& LayerCurve::at_center(std::size_t center) const {
  for (const auto& p : points)
    if (p.center == center) return p;
  throw UsageError("curve has no point at center " + std::to_string(center));
}

MeanSem mean_sem(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean of an empty sample");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

LayerPoint aggregate(std::size_t center, std::span<const ProbePoint> samples) {
  if (samples.empty()) throw UsageError("no samples at center " + std::to_string(center));
  std::vector<double> p1, p2, pc;
  for (const auto& s : samples) {
    p1.push_back(s.p1);
    p2.push_back(s.p2);
    pc.push_back(s.pc);
  }
  const auto pcs = mean_sem(pc);
  return {center, samples.size(), mean_sem(p1).mean, mean_sem(p2).mean, pcs.mean, pcs.sem};
}

LensSeries logit_lens_curve(const ForwardTrace& trace, std::size_t position,
                            std::span<const std::uint32_t> word_ids, const ModelWeights& weights) {
  if (trace.hidden.size() != weights.config.n_layers + 1) {
    throw UsageError("logit lens needs a trace with every hidden state recorded");
  }
  if (position >= trace.hidden.front().rows()) throw UsageError("lens position outside the sequence");
  for (auto id : word_ids) {
    if (id >= weights.config.vocab_size) throw UsageError("lens word id outside the vocabulary");
  }
  LensSeries out;
  out.word_ids.assign(word_ids.begin(), word_ids.end());
  for (const auto& h : trace.hidden) {
    const auto p = unembed(h.row(position), weights);
    std::vector<double> row;
    for (auto id : word_ids) row.push_back(p[id]);
    out.probs.push_back(std::move(row));
  }
  return out;
}

std::vector<std::uint32_t> topk_words(std::span<const float> h, const ModelWeights& weights,
                                      std::size_t k) {
  const auto logits = unembed_logits(h, weights);
  if (k > logits.size()) throw UsageError("k exceeds the vocabulary size");
  std::vector<std::uint32_t> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0u);
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
  return ids;
}

double jaccard(const WordSet& a, const WordSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (auto id : a) inter += b.count(id);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

NormPartition partition_by_norm(const Matrix& patch_features, float threshold) {
  if (!(threshold > 0.0f)) throw UsageError("norm threshold must be positive");
  NormPartition out;
  for (std::size_t r = 0; r < patch_features.rows(); ++r) {
    double sq = 0.0;
    for (float v : patch_features.row(r)) sq += static_cast<double>(v) * v;
    (std::sqrt(sq) > threshold ? out.high : out.rest).push_back(r);
  }
  return out;
}

}  // namespace xflow
