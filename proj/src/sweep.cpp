// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/sweep.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "xflow/error.hpp"

namespace xflow {

InterventionTemplate InterventionTemplate::attention(std::string source, std::string target) {
  InterventionTemplate t;
  t.kind = TemplateKind::Attention;
  t.source = std::move(source);
  t.target = std::move(target);
  return t;
}

InterventionTemplate InterventionTemplate::module_knockout(ModuleKind module, std::string positions) {
  InterventionTemplate t;
  t.kind = TemplateKind::Module;
  t.module = module;
  t.positions = std::move(positions);
  return t;
}

InterventionTemplate InterventionTemplate::prune(std::string pruned_set) {
  InterventionTemplate t;
  t.kind = TemplateKind::Prune;
  t.pruned_set = std::move(pruned_set);
  return t;
}

InterventionPlan InterventionTemplate::instantiate(std::size_t center,
                                                   const std::vector<std::size_t>& layers) const {
  InterventionPlan plan;
  switch (kind) {
    case TemplateKind::Attention:
      plan.knockouts.push_back({source, target, layers});
      break;
    case TemplateKind::Module:
      plan.module_knockouts.push_back({module, positions, layers});
      break;
    case TemplateKind::Prune:
      plan.prune = PruneSpec{center, pruned_set};
      break;
  }
  return plan;
}

std::vector<std::size_t> sweep_centers(const InterventionTemplate& tmpl, const SweepOptions& options,
                                       std::size_t n_layers) {
  if (!options.window.centers.empty()) return options.window.centers;
  std::vector<std::size_t> c(tmpl.kind == TemplateKind::Prune ? n_layers + 1 : n_layers);
  std::iota(c.begin(), c.end(), 0);
  return c;
}

double answer_probability(const ModelWeights& weights, const ScoringInput& input,
                          const InterventionPlan& plan) {
  const auto trace = forward(weights, input.embeddings, input.layout, plan);
  return trace.output[input.scored_id];
}

std::vector<std::vector<ProbePoint>> sweep_samples(const ModelWeights& weights,
                                                   std::span<const Task> tasks,
                                                   const InterventionTemplate& tmpl,
                                                   const SweepOptions& options) {
  if (tasks.empty()) throw UsageError("sweep needs at least one task");
  const std::size_t n_layers = weights.config.n_layers;
  if (options.window.k == 0) throw ConfigError("window size must be at least 1");
  const auto centers = sweep_centers(tmpl, options, n_layers);

  std::vector<ScoringInput> inputs;
  inputs.reserve(tasks.size());
  for (const auto& t : tasks) inputs.push_back(prepare_scoring(t, weights, options.measure));

  std::vector<InterventionPlan> plans;
  for (std::size_t c : centers) {
    if (tmpl.kind == TemplateKind::Prune) {
      if (c > n_layers) throw ConfigError("prune start layer beyond the last layer");
      plans.push_back(tmpl.instantiate(c, {}));
    } else {
      plans.push_back(tmpl.instantiate(c, window_layers(c, options.window.k, n_layers, options.window.mode)));
    }
  }

  // Units: one baseline per task, then one intervened forward per (center, task).
  const std::size_t n_tasks = inputs.size();
  const std::size_t n_units = n_tasks * (1 + centers.size());
  std::vector<double> probs(n_units);
  auto run_unit = [&](std::size_t u) {
    const std::size_t t = u % n_tasks;
    const std::size_t slot = u / n_tasks;
    const InterventionPlan empty;
    probs[u] = answer_probability(weights, inputs[t], slot == 0 ? empty : plans[slot - 1]);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, n_units));
  if (threads == 1) {
    for (std::size_t u = 0; u < n_units; ++u) run_unit(u);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t u = w; u < n_units; u += threads) run_unit(u);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::vector<ProbePoint>> out(centers.size());
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const double p1 = probs[t];
      if (!(p1 > 0.0)) continue;  // undefined baseline: task filtered out
      out[c].push_back(ProbePoint::make(p1, probs[(c + 1) * n_tasks + t]));
    }
  }
  return out;
}

LayerCurve sweep(const ModelWeights& weights, std::span<const Task> tasks,
                 const InterventionTemplate& tmpl, const SweepOptions& options) {
  const auto centers = sweep_centers(tmpl, options, weights.config.n_layers);
  const auto samples = sweep_samples(weights, tasks, tmpl, options);
  LayerCurve curve;
  for (std::size_t c = 0; c < centers.size(); ++c) curve.points.push_back(aggregate(centers[c], samples[c]));
  return curve;
}

}  // namespace xflow
