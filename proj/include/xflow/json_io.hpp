// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// JSON encodings of configs, schedules, layouts and tasks. Readers report
// schema problems as ConfigError naming the offending field.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xflow/circuits.hpp"
#include "xflow/layout.hpp"
#include "xflow/model.hpp"
#include "xflow/task.hpp"

namespace xflow {

using Json = nlohmann::ordered_json;

/// Parses `text`; syntax errors become ConfigError with line and column.
Json parse_json(std::string_view text, std::string_view origin);
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);

/// Typed field access with "<where>.<key>: expected ..." diagnostics.
class JsonReader {
 public:
  JsonReader(const Json& obj, std::string where);

  bool has(std::string_view key) const;
  const Json& raw(std::string_view key) const;
  std::string str(std::string_view key) const;
  std::string str_or(std::string_view key, std::string fallback) const;
  std::uint64_t u64(std::string_view key) const;
  std::uint64_t u64_or(std::string_view key, std::uint64_t fallback) const;
  double num(std::string_view key) const;
  bool boolean_or(std::string_view key, bool fallback) const;
  std::vector<std::size_t> indices(std::string_view key) const;
  std::string path(std::string_view key) const { return where_ + "." + std::string(key); }

  /// Throws ConfigError for keys outside `allowed`.
  void only(std::initializer_list<std::string_view> allowed) const;

 private:
  const Json& obj_;
  std::string where_;
};

Json to_json(const TransformerConfig& config);
TransformerConfig config_from_json(const Json& j, const std::string& where = "config");

Json to_json(const FlowSchedule& schedule);
FlowSchedule schedule_from_json(const Json& j, const std::string& where = "schedule");

Json to_json(const SequenceLayout& layout);
SequenceLayout layout_from_json(const Json& j, const std::string& where = "layout");

Json to_json(const Task& task);
Task task_from_json(const Json& j, const std::string& where = "task");

/// {"tasks": [...]} files written by gen-tasks.
Json tasks_to_json(std::span<const Task> tasks);
std::vector<Task> tasks_from_json(const Json& j);

}  // namespace xflow
