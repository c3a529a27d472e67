// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "xflow/error.hpp"

namespace xflow {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

BenchResult benchmark_prune(const ModelWeights& weights, std::span<const Task> tasks,
                            std::span<const std::size_t> start_layers, std::size_t repetitions) {
  if (repetitions < 3) throw UsageError("benchmark needs at least 3 repetitions");
  if (tasks.empty()) throw UsageError("benchmark needs at least one task");

  std::vector<ScoringInput> inputs;
  for (const auto& t : tasks) inputs.push_back(prepare_scoring(t, weights, MeasurePosition::FirstSubword));

  // Configuration 0 is the unpruned forward.
  std::vector<InterventionPlan> plans(1 + start_layers.size());
  for (std::size_t i = 0; i < start_layers.size(); ++i) {
    if (start_layers[i] > weights.config.n_layers) throw ConfigError("prune start layer beyond L");
    plans[i + 1].prune = PruneSpec{start_layers[i], std::string(sets::kImage)};
  }

  std::vector<std::vector<double>> probs(plans.size());
  auto pass = [&](std::size_t cfg, bool record) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& in : inputs) {
      const auto trace = forward(weights, in.embeddings, in.layout, plans[cfg]);
      if (record) probs[cfg].push_back(trace.output[in.scored_id]);
    }
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };

  for (std::size_t c = 0; c < plans.size(); ++c) pass(c, true);  // warmup, also records probabilities

  std::vector<std::vector<double>> times(plans.size());
  for (std::size_t r = 0; r < repetitions; ++r) {
    for (std::size_t c = 0; c < plans.size(); ++c) times[c].push_back(pass(c, false));
  }

  BenchResult out;
  out.full_raw_ms = times[0];
  out.full_median_ms = median(times[0]);
  for (std::size_t i = 0; i < start_layers.size(); ++i) {
    BenchRow row;
    row.start_layer = start_layers[i];
    row.raw_ms = times[i + 1];
    double sum = 0.0;
    for (double t : row.raw_ms) sum += t;
    row.mean_ms = sum / static_cast<double>(row.raw_ms.size());
    row.median_ms = median(row.raw_ms);
    row.speedup_vs_full = out.full_median_ms / row.median_ms;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      row.answer_prob_delta = std::max(row.answer_prob_delta, std::abs(probs[i + 1][t] - probs[0][t]));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
  out << "start_layer,mean_ms,speedup_vs_full,answer_prob_delta\n";
  for (const auto& r : result.rows) {
    out << r.start_layer << ',' << num(r.mean_ms) << ',' << num(r.speedup_vs_full) << ','
        << num(r.answer_prob_delta) << '\n';
  }
}

void write_bench_raw_csv(std::ostream& out, const BenchResult& result) {
  out << "config,rep,ms\n";
  for (std::size_t i = 0; i < result.full_raw_ms.size(); ++i) out << "full," << i << ',' << num(result.full_raw_ms[i]) << '\n';
  for (const auto& r : result.rows) {
    for (std::size_t i = 0; i < r.raw_ms.size(); ++i) out << r.start_layer << ',' << i << ',' << num(r.raw_ms[i]) << '\n';
  }
}

}  // namespace xflow
