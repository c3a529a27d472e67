// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace xflow {

// Reserved position-set names.
namespace sets {
inline constexpr std::string_view kImage = "IMAGE";
inline constexpr std::string_view kQuestion = "QUESTION";
inline constexpr std::string_view kTrueOption = "TRUE_OPTION";
inline constexpr std::string_view kFalseOption = "FALSE_OPTION";
inline constexpr std::string_view kImgObj = "IMG_OBJ";
inline constexpr std::string_view kImgOth = "IMG_OTH";
inline constexpr std::string_view kLast = "LAST";
// Always empty. Handy for no-op interventions.
inline constexpr std::string_view kNone = "NONE";
// Every position in the sequence.
inline constexpr std::string_view kAll = "ALL";
// Planted high-norm patches, when the task generator adds them.
inline constexpr std::string_view kRegister = "REGISTER";
// Teacher-forced answer sub-words appended for final sub-word scoring.
inline constexpr std::string_view kAnswerPrefix = "ANSWER_PREFIX";
}  // namespace sets

/// Named position sets over a multimodal input of n_visual patches followed by
/// n_text tokens. IMAGE, LAST, NONE and ALL are derived from the sizes and
/// cannot be overwritten.
class SequenceLayout {
 public:
  SequenceLayout() = default;
  SequenceLayout(std::size_t n_visual, std::size_t n_text);

  std::size_t n_visual() const { return n_visual_; }
  std::size_t n_text() const { return n_text_; }
  std::size_t size() const { return n_visual_ + n_text_; }
  std::size_t last() const { return size() - 1; }

  /// Stores a sorted, deduplicated copy. Throws InputError for out-of-range
  /// positions and PlanError for derived names.
  void set(std::string_view name, std::vector<std::size_t> positions);

  bool contains(std::string_view name) const;

  /// Throws PlanError for unknown names.
  const std::vector<std::size_t>& at(std::string_view name) const;

  /// Per-position membership flags for a set.
  std::vector<bool> mask_of(std::string_view name) const;

  /// Names of every stored or derived set.
  std::vector<std::string> names() const;

  /// Explicitly stored (non-derived) sets, in name order.
  const std::map<std::string, std::vector<std::size_t>, std::less<>>& user_sets() const { return sets_; }

  /// Throws InputError when IMG_OBJ / IMG_OTH (both present) do not partition IMAGE.
  void validate() const;

  bool operator==(const SequenceLayout&) const = default;

 private:
  void rebuild_derived();

  std::size_t n_visual_ = 0;
  std::size_t n_text_ = 0;
  std::map<std::string, std::vector<std::size_t>, std::less<>> sets_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> derived_;
};

/// Positions in `a` that are not in `b`; both sorted.
std::vector<std::size_t> set_difference(const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b);

}  // namespace xflow
