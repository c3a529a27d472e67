// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "xflow/layout.hpp"
#include "xflow/model.hpp"
#include "xflow/numerics.hpp"

namespace xflow {

/// One image-question pair with its answer.
struct Task {
  Matrix patch_features;                 // N_V × d
  std::vector<std::uint32_t> token_ids;  // question tokens, the last one sits at LAST
  std::uint32_t answer_id = 0;           // lowercase answer word
  std::uint32_t answer_cap_id = 0;       // capitalized variant
  std::uint32_t false_option_id = 0;     // distractor option
  // Sub-words of the answer the model is expected to generate; the first is
  // scored at LAST. Defaults to {answer_id} when empty.
  std::vector<std::uint32_t> answer_subwords;
  SequenceLayout layout;

  std::vector<std::uint32_t> scored_subwords() const;
  bool operator==(const Task&) const = default;
};

enum class MeasurePosition { FirstSubword, FinalSubword };

std::string_view to_string(MeasurePosition m);
MeasurePosition parse_measure_position(std::string_view name);

struct ScoringInput {
  Matrix embeddings;
  SequenceLayout layout;
  std::uint32_t scored_id = 0;
};

/// Builds the model input for scoring one task. FINAL_SUBWORD appends all
/// answer sub-words but the last (teacher forcing, recorded under
/// ANSWER_PREFIX) and scores the final sub-word at the new last position.
ScoringInput prepare_scoring(const Task& task, const ModelWeights& weights, MeasurePosition where);

}  // namespace xflow
