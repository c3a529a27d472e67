// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xflow/intervention.hpp"
#include "xflow/metrics.hpp"
#include "xflow/model.hpp"
#include "xflow/task.hpp"

namespace xflow {

enum class TemplateKind { Attention, Module, Prune };

/// An intervention with a free center layer. Attention and module templates
/// act on the window around the center; prune templates use the center as the
/// start layer.
struct InterventionTemplate {
  TemplateKind kind = TemplateKind::Attention;
  std::string source;
  std::string target;
  ModuleKind module = ModuleKind::Mhat;
  std::string positions;
  std::string pruned_set{sets::kImage};

  static InterventionTemplate attention(std::string source, std::string target);
  static InterventionTemplate module_knockout(ModuleKind module, std::string positions);
  static InterventionTemplate prune(std::string pruned_set = std::string(sets::kImage));

  InterventionPlan instantiate(std::size_t center, const std::vector<std::size_t>& layers) const;
};

struct SweepOptions {
  WindowSweep window;
  MeasurePosition measure = MeasurePosition::FirstSubword;
  std::size_t threads = 1;
};

/// Centers the sweep visits: window.centers, or every layer (every start
/// layer 0..L for prune templates) when empty.
std::vector<std::size_t> sweep_centers(const InterventionTemplate& tmpl, const SweepOptions& options,
                                       std::size_t n_layers);

/// Per-center probe points, one per task with a positive baseline, in task order.
std::vector<std::vector<ProbePoint>> sweep_samples(const ModelWeights& weights,
                                                   std::span<const Task> tasks,
                                                   const InterventionTemplate& tmpl,
                                                   const SweepOptions& options);

/// Baseline once per task, intervened forward per (center, task), aggregated
/// per center.
LayerCurve sweep(const ModelWeights& weights, std::span<const Task> tasks,
                 const InterventionTemplate& tmpl, const SweepOptions& options);

/// Probability of the scored sub-word under `plan`.
double answer_probability(const ModelWeights& weights, const ScoringInput& input,
                          const InterventionPlan& plan);

}  // namespace xflow
