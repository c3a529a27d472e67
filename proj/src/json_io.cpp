// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/json_io.hpp"

#include <fstream>
#include <sstream>

#include "xflow/error.hpp"

namespace xflow {

Json parse_json(std::string_view text, std::string_view origin) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(std::string(origin) + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": invalid JSON");
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path.string());
}

void write_json_file(const std::filesystem::path& path, const Json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

JsonReader::JsonReader(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
  if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
}

bool JsonReader::has(std::string_view key) const { return obj_.contains(key); }

const Json& JsonReader::raw(std::string_view key) const {
  auto it = obj_.find(key);
  if (it == obj_.end()) throw ConfigError(path(key) + ": missing required field");
  return *it;
}

std::string JsonReader::str(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
  return v.get<std::string>();
}

std::string JsonReader::str_or(std::string_view key, std::string fallback) const {
  return has(key) ? str(key) : fallback;
}

std::uint64_t JsonReader::u64(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(path(key) + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::uint64_t JsonReader::u64_or(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? u64(key) : fallback;
}

double JsonReader::num(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
  return v.get<double>();
}

bool JsonReader::boolean_or(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw(key);
  if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
  return v.get<bool>();
}

std::vector<std::size_t> JsonReader::indices(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) {
      throw ConfigError(path(key) + ": expected an array of non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

void JsonReader::only(std::initializer_list<std::string_view> allowed) const {
  for (const auto& [k, v] : obj_.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw ConfigError(path(k) + ": unknown field");
  }
}

Json to_json(const TransformerConfig& c) {
  return Json{{"n_layers", c.n_layers},   {"d_model", c.d_model},
              {"d_ff", c.d_ff},           {"n_heads", c.n_heads},
              {"n_kv_heads", c.n_kv_heads}, {"vocab_size", c.vocab_size},
              {"activation", std::string(to_string(c.activation))},
              {"use_norm", c.use_norm},   {"norm_eps", c.norm_eps}};
}

TransformerConfig config_from_json(const Json& j, const std::string& where) {
  JsonReader r(j, where);
  r.only({"n_layers", "d_model", "d_ff", "n_heads", "n_kv_heads", "vocab_size", "activation", "use_norm",
          "norm_eps"});
  TransformerConfig c;
  c.n_layers = r.u64("n_layers");
  c.d_model = r.u64("d_model");
  c.d_ff = r.u64("d_ff");
  c.n_heads = r.u64("n_heads");
  c.n_kv_heads = r.u64_or("n_kv_heads", c.n_heads);
  c.vocab_size = r.u64("vocab_size");
  try {
    c.activation = parse_activation(r.str_or("activation", "IDENTITY"));
  } catch (const ConfigError& e) {
    throw ConfigError(r.path("activation") + ": " + e.what());
  }
  c.use_norm = r.boolean_or("use_norm", false);
  if (r.has("norm_eps")) c.norm_eps = static_cast<float>(r.num("norm_eps"));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

Json to_json(const FlowSchedule& s) {
  Json stages = Json::array();
  for (const auto& st : s.stages) {
    stages.push_back(Json{{"name", std::string(to_string(st.kind))},
                          {"layers", st.layers},
                          {"source", std::string(st.source())},
                          {"target", std::string(st.target())},
                          {"through_ffn", st.through_ffn}});
  }
  return Json{{"stages", stages}};
}

FlowSchedule schedule_from_json(const Json& j, const std::string& where) {
  JsonReader r(j, where);
  r.only({"stages"});
  const auto& arr = r.raw("stages");
  if (!arr.is_array()) throw ConfigError(r.path("stages") + ": expected an array");
  FlowSchedule s;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string w = r.path("stages") + "[" + std::to_string(i) + "]";
    JsonReader sr(arr[i], w);
    sr.only({"name", "layers", "source", "target", "through_ffn"});
    Stage st;
    try {
      st.kind = parse_stage_kind(sr.str("name"));
    } catch (const ConfigError& e) {
      throw ConfigError(sr.path("name") + ": " + e.what());
    }
    st.layers = sr.indices("layers");
    st.through_ffn = sr.boolean_or("through_ffn", false);
    if (sr.has("source") && sr.str("source") != st.source()) {
      throw ConfigError(sr.path("source") + ": " + std::string(to_string(st.kind)) + " reads " +
                        std::string(st.source()));
    }
    if (sr.has("target") && sr.str("target") != st.target()) {
      throw ConfigError(sr.path("target") + ": " + std::string(to_string(st.kind)) + " writes " +
                        std::string(st.target()));
    }
    s.stages.push_back(std::move(st));
  }
  return s;
}

Json to_json(const SequenceLayout& layout) {
  Json sets = Json::object();
  for (const auto& [name, pos] : layout.user_sets()) sets[name] = pos;
  return Json{{"n_visual", layout.n_visual()}, {"n_text", layout.n_text()}, {"sets", sets}};
}

SequenceLayout layout_from_json(const Json& j, const std::string& where) {
  JsonReader r(j, where);
  r.only({"n_visual", "n_text", "sets"});
  SequenceLayout layout;
  try {
    layout = SequenceLayout(r.u64("n_visual"), r.u64("n_text"));
  } catch (const InputError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (r.has("sets")) {
    JsonReader sr(r.raw("sets"), r.path("sets"));
    for (const auto& [name, v] : r.raw("sets").items()) {
      try {
        layout.set(name, sr.indices(name));
      } catch (const PlanError& e) {
        throw ConfigError(sr.path(name) + ": " + e.what());
      } catch (const InputError& e) {
        throw ConfigError(sr.path(name) + ": " + e.what());
      }
    }
  }
  return layout;
}

Json to_json(const Task& t) {
  return Json{{"n_patches", t.patch_features.rows()},
              {"d_model", t.patch_features.cols()},
              {"patch_features", t.patch_features.data()},
              {"token_ids", t.token_ids},
              {"answer_id", t.answer_id},
              {"answer_cap_id", t.answer_cap_id},
              {"false_option_id", t.false_option_id},
              {"answer_subwords", t.answer_subwords},
              {"layout", to_json(t.layout)}};
}

Task task_from_json(const Json& j, const std::string& where) {
  JsonReader r(j, where);
  r.only({"n_patches", "d_model", "patch_features", "token_ids", "answer_id", "answer_cap_id",
          "false_option_id", "answer_subwords", "layout"});
  Task t;
  const std::size_t rows = r.u64("n_patches");
  const std::size_t cols = r.u64("d_model");
  const auto& pf = r.raw("patch_features");
  if (!pf.is_array() || pf.size() != rows * cols) {
    throw ConfigError(r.path("patch_features") + ": expected " + std::to_string(rows * cols) + " numbers");
  }
  std::vector<float> data;
  data.reserve(pf.size());
  for (const auto& v : pf) {
    if (!v.is_number()) throw ConfigError(r.path("patch_features") + ": expected numbers");
    data.push_back(v.get<float>());
  }
  t.patch_features = Matrix(rows, cols, std::move(data));
  for (auto v : r.indices("token_ids")) t.token_ids.push_back(static_cast<std::uint32_t>(v));
  t.answer_id = static_cast<std::uint32_t>(r.u64("answer_id"));
  t.answer_cap_id = static_cast<std::uint32_t>(r.u64_or("answer_cap_id", t.answer_id));
  t.false_option_id = static_cast<std::uint32_t>(r.u64_or("false_option_id", 0));
  if (r.has("answer_subwords")) {
    for (auto v : r.indices("answer_subwords")) t.answer_subwords.push_back(static_cast<std::uint32_t>(v));
  }
  t.layout = layout_from_json(r.raw("layout"), r.path("layout"));
  if (t.layout.n_visual() != rows || t.layout.n_text() != t.token_ids.size()) {
    throw ConfigError(r.path("layout") + ": sizes do not match patch_features / token_ids");
  }
  return t;
}

Json tasks_to_json(std::span<const Task> tasks) {
  Json arr = Json::array();
  for (const auto& t : tasks) arr.push_back(to_json(t));
  return Json{{"tasks", arr}};
}

std::vector<Task> tasks_from_json(const Json& j) {
  JsonReader r(j, "tasks_file");
  const auto& arr = r.raw("tasks");
  if (!arr.is_array()) throw ConfigError(r.path("tasks") + ": expected an array");
  std::vector<Task> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(task_from_json(arr[i], "tasks[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace xflow
