// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/layout.hpp"

#include <algorithm>
#include <numeric>

#include "xflow/error.hpp"

namespace xflow {

namespace {

bool is_derived(std::string_view name) {
  return name == sets::kImage || name == sets::kLast || name == sets::kNone || name == sets::kAll;
}

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  std::iota(v.begin(), v.end(), begin);
  return v;
}

}  // namespace

SequenceLayout::SequenceLayout(std::size_t n_visual, std::size_t n_text)
    : n_visual_(n_visual), n_text_(n_text) {
  if (n_text == 0) throw InputError("sequence layout needs at least one text position");
  rebuild_derived();
}

void SequenceLayout::rebuild_derived() {
  derived_.clear();
  derived_[std::string(sets::kImage)] = iota_range(0, n_visual_);
  derived_[std::string(sets::kLast)] = {size() - 1};
  derived_[std::string(sets::kNone)] = {};
  derived_[std::string(sets::kAll)] = iota_range(0, size());
}

void SequenceLayout::set(std::string_view name, std::vector<std::size_t> positions) {
  if (is_derived(name)) throw PlanError("position set '" + std::string(name) + "' is derived");
  if (name.empty()) throw PlanError("position set name must be non-empty");
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  if (!positions.empty() && positions.back() >= size()) {
    throw InputError("position " + std::to_string(positions.back()) + " in set '" +
                     std::string(name) + "' is outside a sequence of length " +
                     std::to_string(size()));
  }
  sets_.insert_or_assign(std::string(name), std::move(positions));
}

bool SequenceLayout::contains(std::string_view name) const {
  return derived_.find(name) != derived_.end() || sets_.find(name) != sets_.end();
}

const std::vector<std::size_t>& SequenceLayout::at(std::string_view name) const {
  if (auto it = derived_.find(name); it != derived_.end()) return it->second;
  if (auto it = sets_.find(name); it != sets_.end()) return it->second;
  throw PlanError("unknown position set '" + std::string(name) + "'");
}

std::vector<bool> SequenceLayout::mask_of(std::string_view name) const {
  std::vector<bool> m(size(), false);
  for (std::size_t p : at(name)) m[p] = true;
  return m;
}

std::vector<std::string> SequenceLayout::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : derived_) out.push_back(k);
  for (const auto& [k, _] : sets_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

void SequenceLayout::validate() const {
  if (!contains(sets::kImgObj) || !contains(sets::kImgOth)) return;
  const auto& obj = at(sets::kImgObj);
  const auto& oth = at(sets::kImgOth);
  std::vector<std::size_t> uni;
  std::set_union(obj.begin(), obj.end(), oth.begin(), oth.end(), std::back_inserter(uni));
  if (uni.size() != obj.size() + oth.size()) throw InputError("IMG_OBJ and IMG_OTH overlap");
  if (uni != at(sets::kImage)) throw InputError("IMG_OBJ and IMG_OTH do not cover IMAGE");
}

std::vector<std::size_t> set_difference(const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace xflow
