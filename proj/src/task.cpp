// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/task.hpp"

#include <numeric>
#include <string>

#include "xflow/error.hpp"

namespace xflow {

std::vector<std::uint32_t> Task::scored_subwords() const {
  if (answer_subwords.empty()) return {answer_id};
  return answer_subwords;
}

std::string_view to_string(MeasurePosition m) {
  return m == MeasurePosition::FirstSubword ? "FIRST_SUBWORD" : "FINAL_SUBWORD";
}

MeasurePosition parse_measure_position(std::string_view name) {
  if (name == "FIRST_SUBWORD" || name == "first") return MeasurePosition::FirstSubword;
  if (name == "FINAL_SUBWORD" || name == "final") return MeasurePosition::FinalSubword;
  throw ConfigError("unknown measure position '" + std::string(name) + "'");
}

ScoringInput prepare_scoring(const Task& task, const ModelWeights& weights, MeasurePosition where) {
  const auto subwords = task.scored_subwords();
  if (where == MeasurePosition::FirstSubword || subwords.size() == 1) {
    auto in = assemble_input(task.patch_features, task.token_ids, weights);
    return {std::move(in.embeddings), task.layout, subwords.front()};
  }

  std::vector<std::uint32_t> tokens = task.token_ids;
  tokens.insert(tokens.end(), subwords.begin(), subwords.end() - 1);
  auto in = assemble_input(task.patch_features, tokens, weights);

  SequenceLayout layout(task.layout.n_visual(), tokens.size());
  for (const auto& [name, positions] : task.layout.user_sets()) layout.set(name, positions);
  std::vector<std::size_t> prefix(subwords.size() - 1);
  std::iota(prefix.begin(), prefix.end(), task.layout.size());
  layout.set(sets::kAnswerPrefix, std::move(prefix));
  return {std::move(in.embeddings), std::move(layout), subwords.back()};
}

}  // namespace xflow
