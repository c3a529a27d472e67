// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// Planted circuits: synthetic image-question tasks and hand-set weights whose
// information-flow schedule is known exactly, plus a reachability oracle that
// predicts the effect of any intervention without looking at the weights.
//
// Residual layout for A attributes (the remaining dims carry patch noise and
// are never read):
//
//   [0, A)          P   patch attribute payload (input only)
//   A + 0..6        tags: IMAGE, TEXT, QUESTION, LAST, BACKGROUND, OBJECT, REGISTER
//   S               A dims, payload accumulated at question positions
//   T               A dims, staging for payloads routed through the FFN
//   O               A dims, lowercase answer logit directions
//   C               A dims, capitalized answer logit directions
//   DEBT            1 dim, drives the DEFAULT token logit
//   PAID            1 dim, hop payments accumulated at question positions
//
// Every scheduled hop pays a fixed amount against a debt planted in the
// LAST-position embedding. A hop that does not run (severed edge, zeroed
// module, pruned source) leaves debt behind and the DEFAULT token swamps the
// answer.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xflow/intervention.hpp"
#include "xflow/layout.hpp"
#include "xflow/model.hpp"
#include "xflow/task.hpp"

namespace xflow {

enum class StageKind { Broad, Targeted, Readout, CapFix };

std::string_view to_string(StageKind k);
StageKind parse_stage_kind(std::string_view name);

struct Stage {
  StageKind kind = StageKind::Broad;
  std::vector<std::size_t> layers;
  bool through_ffn = false;  // TARGETED only: payload reaches S via the FFN

  /// Position set the stage reads from / writes to.
  std::string_view source() const;
  std::string_view target() const;
  bool operator==(const Stage&) const = default;
};

struct FlowSchedule {
  std::vector<Stage> stages;

  /// Throws ConfigError on overlapping layers, layers >= n_layers, repeated
  /// kinds, out-of-order stages, or through_ffn outside TARGETED.
  void validate(std::size_t n_layers) const;

  const Stage* find(StageKind kind) const;
  bool has(StageKind kind) const { return find(kind) != nullptr; }
  std::vector<std::size_t> layers_of(StageKind kind) const;

  /// BROAD@{0,1}, TARGETED@{3,4}, READOUT@{6,7}.
  static FlowSchedule two_stage();

  bool operator==(const FlowSchedule&) const = default;
};

/// Offsets of every subspace in the residual stream.
struct CircuitDims {
  std::size_t n_attributes = 0;
  std::size_t payload = 0;
  std::size_t tag_image = 0, tag_text = 0, tag_question = 0, tag_last = 0;
  std::size_t tag_background = 0, tag_object = 0, tag_register = 0;
  std::size_t accum = 0, staging = 0, lower = 0, cap = 0;
  std::size_t debt = 0, paid = 0;
  std::size_t used = 0;  // first free dim

  static CircuitDims make(std::size_t n_attributes);
};

/// Token ids of the planted vocabulary.
struct CircuitVocab {
  static constexpr std::uint32_t kDefault = 0;  // "unknown"
  static constexpr std::uint32_t kPrompt = 1;   // sits at LAST
  static constexpr std::uint32_t kFillerBegin = 2;
  static constexpr std::uint32_t kFillerCount = 8;
  static constexpr std::uint32_t kAttrBegin = kFillerBegin + kFillerCount;
  static constexpr std::uint32_t kWordsPerAttr = 10;  // lower, cap, 8 related
  static constexpr std::uint32_t kRelatedPerAttr = kWordsPerAttr - 2;

  static std::uint32_t lower(std::size_t a) { return kAttrBegin + kWordsPerAttr * static_cast<std::uint32_t>(a); }
  static std::uint32_t cap(std::size_t a) { return lower(a) + 1; }
  static std::uint32_t related(std::size_t a, std::size_t i) {
    return lower(a) + 2 + static_cast<std::uint32_t>(i);
  }
  static std::size_t required_size(std::size_t n_attributes) {
    return kAttrBegin + kWordsPerAttr * n_attributes;
  }
};

struct CircuitParams {
  std::size_t n_attributes = 8;
};

/// Throws ConfigError when the config cannot host the circuit: residual,
/// head or FFN width too small, vocabulary too small, or a non-linear
/// activation or norm enabled.
void check_circuit_config(const TransformerConfig& config, const CircuitParams& params);

/// Hand-set weights implementing `schedule` (head 0 of each stage layer).
/// Non-stage layers are exact no-ops. Needs IDENTITY activation and no norms.
ModelWeights plant_circuit(const TransformerConfig& config, const FlowSchedule& schedule,
                           const CircuitParams& params = {});

struct TaskGenParams {
  std::size_t n_patches = 16;
  // Object patches [object_begin, object_end); a random span of
  // object_length patches when unset.
  std::optional<std::size_t> object_begin;
  std::optional<std::size_t> object_end;
  std::size_t object_length = 4;
  std::size_t n_filler = 5;
  std::size_t n_registers = 0;  // 0..4 high-norm patches taken from IMG_OTH
  bool score_capitalized = false;
  CircuitParams circuit;
};

/// Deterministic in (params, config, seed). Object patches carry the answer
/// attribute, background patches the distractor's.
Task gen_task(const TaskGenParams& params, const TransformerConfig& config, std::uint64_t seed);

/// `count` tasks with seeds derived from `seed`.
std::vector<Task> gen_tasks(const TaskGenParams& params, const TransformerConfig& config,
                            std::uint64_t seed, std::size_t count);

enum class Effect { Collapse, Intact };

std::string_view to_string(Effect e);

/// One scheduled copy: the answer needs every hop of the chain.
struct FlowHop {
  StageKind stage = StageKind::Broad;
  std::size_t layer = 0;
  ModuleKind module = ModuleKind::Mhat;
  std::string source;
  std::string target;
};

struct FlowNode {
  std::string set;
  std::size_t layer = 0;
};

/// Acyclic copy graph over (position-set, layer) nodes. Node 0 is the image
/// payload at layer 0; the output node is (LAST, L).
struct FlowGraph {
  struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    std::optional<FlowHop> hop;  // empty for residual carry edges
  };

  std::vector<FlowNode> nodes;
  std::vector<Edge> edges;
  std::size_t output = 0;

  static FlowGraph build(const FlowSchedule& schedule, std::size_t n_layers);

  /// Whether the output node is reachable when the flagged edges are removed.
  bool reaches_output(const std::vector<bool>& removed) const;
};

/// Pure reachability: builds the graph, removes every hop the plan severs,
/// and reports COLLAPSE when the image payload no longer reaches LAST. A hop
/// is severed when none of its target positions can still read any of its
/// source positions (attention knockouts, pruning) or when every target row
/// of its module is zeroed. Interventions that cut a hop for only part of its
/// targets count as leaving it intact.
Effect oracle_effect(const FlowSchedule& schedule, std::size_t n_layers, const SequenceLayout& layout,
                     const InterventionPlan& plan);

/// Positions that actually carry a stage's payload in `layout`.
std::vector<std::size_t> effective_source(const Stage& stage, const SequenceLayout& layout);

struct VerifyReport {
  std::size_t n_tasks = 0;
  double accuracy = 0.0;
  double min_answer_prob = 0.0;
  double max_off_target = 0.0;      // attention outside the stage source, at stage targets
  double max_residual_error = 0.0;  // |H^ℓ - H^{ℓ-1} - a^ℓ - f^ℓ|
  bool accuracy_ok = false;
  bool attention_ok = false;
  bool residual_ok = false;

  bool passed() const { return accuracy_ok && attention_ok && residual_ok; }
};

inline constexpr double kMaxOffTargetAttention = 1e-3;
inline constexpr double kResidualTolerance = 1e-6;

VerifyReport verify_circuit(const ModelWeights& weights, const FlowSchedule& schedule,
                            std::span<const Task> tasks);

}  // namespace xflow
