// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "xflow/model.hpp"
#include "xflow/task.hpp"

namespace xflow {

struct BenchRow {
  std::size_t start_layer = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double speedup_vs_full = 1.0;    // median(full) / median(pruned)
  double answer_prob_delta = 0.0;  // max over tasks of |p_pruned - p_full|
  std::vector<double> raw_ms;      // one entry per repetition
};

struct BenchResult {
  double full_median_ms = 0.0;
  std::vector<double> full_raw_ms;
  std::vector<BenchRow> rows;
};

/// Times single-threaded forwards over every task, unpruned and with IMAGE
/// pruned from each start layer. One warmup pass per configuration is
/// discarded; repetitions interleave the configurations. Throws UsageError
/// for fewer than 3 repetitions or no tasks.
BenchResult benchmark_prune(const ModelWeights& weights, std::span<const Task> tasks,
                            std::span<const std::size_t> start_layers, std::size_t repetitions);

/// `start_layer,mean_ms,speedup_vs_full,answer_prob_delta`
void write_bench_csv(std::ostream& out, const BenchResult& result);

/// `config,rep,ms`; config is "full" or the prune start layer.
void write_bench_raw_csv(std::ostream& out, const BenchResult& result);

}  // namespace xflow
