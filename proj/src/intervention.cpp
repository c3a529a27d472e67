// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/intervention.hpp"

#include <algorithm>
#include <numeric>

#include "xflow/error.hpp"

namespace xflow {

namespace {

bool contains_layer(const std::vector<std::size_t>& layers, std::size_t layer) {
  return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

void check_layers(const std::vector<std::size_t>& layers, std::size_t n_layers,
                  std::string_view what) {
  for (std::size_t l : layers) {
    if (l >= n_layers) {
      throw PlanError(std::string(what) + " references layer " + std::to_string(l) +
                      " but the model has " + std::to_string(n_layers));
    }
  }
}

}  // namespace

bool KnockoutSpec::active_at(std::size_t layer) const { return contains_layer(layers, layer); }
bool ModuleKnockoutSpec::active_at(std::size_t layer) const { return contains_layer(layers, layer); }

std::string_view to_string(ModuleKind m) { return m == ModuleKind::Mhat ? "MHAT" : "FFN"; }

ModuleKind parse_module_kind(std::string_view name) {
  if (name == "MHAT" || name == "mhat") return ModuleKind::Mhat;
  if (name == "FFN" || name == "ffn" || name == "MLP" || name == "mlp") return ModuleKind::Ffn;
  throw ConfigError("unknown module '" + std::string(name) + "' (expected MHAT or FFN)");
}

std::string_view to_string(WindowMode m) { return m == WindowMode::Centered ? "CENTERED" : "FORWARD"; }

WindowMode parse_window_mode(std::string_view name) {
  if (name == "CENTERED" || name == "centered") return WindowMode::Centered;
  if (name == "FORWARD" || name == "forward") return WindowMode::Forward;
  throw ConfigError("unknown window mode '" + std::string(name) + "'");
}

void InterventionPlan::validate(const SequenceLayout& layout, std::size_t n_layers) const {
  for (const auto& k : knockouts) {
    layout.at(k.source);
    layout.at(k.target);
    check_layers(k.layers, n_layers, "knockout " + k.source + "->" + k.target);
  }
  for (const auto& m : module_knockouts) {
    layout.at(m.positions);
    check_layers(m.layers, n_layers, "module knockout on " + m.positions);
  }
  if (prune) {
    if (prune->start_layer > n_layers) {
      throw PlanError("prune start layer " + std::to_string(prune->start_layer) +
                      " exceeds layer count " + std::to_string(n_layers));
    }
    const auto& pruned = layout.at(prune->pruned_set);
    if (std::binary_search(pruned.begin(), pruned.end(), layout.last())) {
      throw PlanError("prune set '" + prune->pruned_set + "' contains LAST");
    }
  }
}

std::vector<std::size_t> window_layers(std::size_t center, std::size_t k, std::size_t n_layers,
                                       WindowMode mode) {
  if (k == 0) throw ConfigError("window size must be at least 1");
  if (center >= n_layers) throw ConfigError("window center outside the layer range");
  std::size_t lo = center, hi = center;
  if (mode == WindowMode::Centered) {
    const std::size_t half = k / 2;
    lo = center >= half ? center - half : 0;
    hi = std::min(center + half, n_layers - 1);
  } else {
    hi = std::min(center + k - 1, n_layers - 1);
  }
  std::vector<std::size_t> out(hi - lo + 1);
  std::iota(out.begin(), out.end(), lo);
  return out;
}

Matrix build_attention_mask(const SequenceLayout& layout, std::size_t layer,
                            std::span<const KnockoutSpec> knockouts) {
  std::vector<std::size_t> all(layout.size());
  std::iota(all.begin(), all.end(), 0);
  return build_attention_mask(layout, layer, knockouts, all);
}

Matrix build_attention_mask(const SequenceLayout& layout, std::size_t layer,
                            std::span<const KnockoutSpec> knockouts,
                            std::span<const std::size_t> alive) {
  const std::size_t n = alive.size();
  Matrix mask(n, n, 0.0f);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t s = q + 1; s < n; ++s) mask(q, s) = kNegInf;

  for (const auto& spec : knockouts) {
    if (!spec.active_at(layer)) continue;
    const auto in_source = layout.mask_of(spec.source);
    const auto in_target = layout.mask_of(spec.target);
    for (std::size_t q = 0; q < n; ++q) {
      if (!in_target[alive[q]]) continue;
      for (std::size_t s = 0; s <= q; ++s) {
        if (in_source[alive[s]]) mask(q, s) = kNegInf;
      }
    }
  }
  return mask;
}

Matrix apply_module_knockout(const Matrix& out, const ModuleKnockoutSpec& spec, std::size_t layer,
                             const SequenceLayout& layout, std::span<const std::size_t> rows) {
  if (!spec.active_at(layer)) return out;
  Matrix result = out;
  const auto hit = layout.mask_of(spec.positions);
  for (std::size_t r = 0; r < result.rows(); ++r) {
    const std::size_t pos = rows.empty() ? r : rows[r];
    if (pos < hit.size() && hit[pos]) std::fill(result.row(r).begin(), result.row(r).end(), 0.0f);
  }
  return result;
}

std::vector<std::size_t> surviving_positions(const SequenceLayout& layout, const PruneSpec& spec) {
  std::vector<std::size_t> all(layout.size());
  std::iota(all.begin(), all.end(), 0);
  return set_difference(all, layout.at(spec.pruned_set));
}

}  // namespace xflow
