// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xflow/layout.hpp"
#include "xflow/numerics.hpp"

namespace xflow {

/// Blocks every position in `target` from attending to every position in
/// `source` at the listed layers. Source and target may overlap; the self
/// edge is severed in that case.
struct KnockoutSpec {
  std::string source;
  std::string target;
  std::vector<std::size_t> layers;

  bool active_at(std::size_t layer) const;
};

enum class ModuleKind { Mhat, Ffn };

std::string_view to_string(ModuleKind m);
ModuleKind parse_module_kind(std::string_view name);

/// Zeroes the MHAT or FFN output rows at `positions` on the listed layers.
struct ModuleKnockoutSpec {
  ModuleKind module = ModuleKind::Mhat;
  std::string positions;
  std::vector<std::size_t> layers;

  bool active_at(std::size_t layer) const;
};

/// Drops `pruned_set` from the working sequence starting at layer
/// `start_layer`. start_layer == n_layers prunes nothing.
struct PruneSpec {
  std::size_t start_layer = 0;
  std::string pruned_set{sets::kImage};
};

enum class WindowMode { Centered, Forward };

std::string_view to_string(WindowMode m);
WindowMode parse_window_mode(std::string_view name);

struct WindowSweep {
  std::size_t k = 9;
  WindowMode mode = WindowMode::Centered;
  std::vector<std::size_t> centers;  // empty means every layer
};

struct InterventionPlan {
  std::vector<KnockoutSpec> knockouts;
  std::vector<ModuleKnockoutSpec> module_knockouts;
  std::optional<PruneSpec> prune;

  bool empty() const { return knockouts.empty() && module_knockouts.empty() && !prune; }

  /// Throws PlanError for unknown set names, layers >= n_layers, or a prune
  /// that would drop LAST.
  void validate(const SequenceLayout& layout, std::size_t n_layers) const;
};

/// CENTERED: {ℓ-⌊k/2⌋ .. ℓ+⌊k/2⌋} clipped to [0, L-1].
/// FORWARD:  {ℓ .. min(ℓ+k-1, L-1)}.
std::vector<std::size_t> window_layers(std::size_t center, std::size_t k, std::size_t n_layers,
                                       WindowMode mode);

/// Additive N×N mask for one layer: causal NEG_INF above the diagonal plus
/// NEG_INF at (q, s) for every active spec with q ∈ target and s ∈ source.
/// Rows are queries, columns keys.
Matrix build_attention_mask(const SequenceLayout& layout, std::size_t layer,
                            std::span<const KnockoutSpec> knockouts);

/// Same mask restricted to the surviving positions `alive` (sorted original
/// indices); row/column r of the result stands for position alive[r].
Matrix build_attention_mask(const SequenceLayout& layout, std::size_t layer,
                            std::span<const KnockoutSpec> knockouts,
                            std::span<const std::size_t> alive);

/// Returns `out` with rows at the spec's positions zeroed when `layer` is one
/// of the spec's layers; otherwise `out` unchanged. `rows` maps matrix rows to
/// original positions (empty means the identity mapping).
Matrix apply_module_knockout(const Matrix& out, const ModuleKnockoutSpec& spec, std::size_t layer,
                             const SequenceLayout& layout, std::span<const std::size_t> rows = {});

/// Positions that remain in the sequence once `spec` takes effect.
std::vector<std::size_t> surviving_positions(const SequenceLayout& layout, const PruneSpec& spec);

}  // namespace xflow
