// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// xflow command line: gen-model, gen-tasks, run, bench, verify.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "xflow/circuits.hpp"
#include "xflow/error.hpp"
#include "xflow/experiment.hpp"
#include "xflow/json_io.hpp"
#include "xflow/weight_file.hpp"

namespace fs = std::filesystem;
using namespace xflow;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool svg = false;
};

fs::path out_dir_or(const GlobalFlags& g, const fs::path& fallback) {
  return g.out.empty() ? fallback : fs::path(g.out);
}

// {"model": "planted" | "random", "config": {...}, "schedule": {...},
//  "n_attributes": 8, "scale": 0.02, "seed": 0, "file": "model.xflw"}
int gen_model(const GlobalFlags& g) {
  const fs::path cfg_path(g.config);
  const Json j = read_json_file(cfg_path);
  JsonReader r(j, "gen_model");
  r.only({"model", "config", "schedule", "n_attributes", "scale", "seed", "file"});
  const auto config = config_from_json(r.raw("config"));
  const std::string kind = r.str_or("model", "planted");
  const std::uint64_t seed = g.seed.value_or(r.u64_or("seed", 0));
  const fs::path out = out_dir_or(g, cfg_path.parent_path()) / r.str_or("file", "model.xflw");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  if (kind == "planted") {
    const auto schedule = schedule_from_json(r.raw("schedule"));
    CircuitParams params;
    params.n_attributes = r.u64_or("n_attributes", params.n_attributes);
    const auto weights = plant_circuit(config, schedule, params);
    save_model(weights, out, Json{{"kind", "planted"}, {"schedule", to_json(schedule)},
                                   {"n_attributes", params.n_attributes}});
  } else if (kind == "random") {
    const float scale = static_cast<float>(r.has("scale") ? r.num("scale") : 0.02);
    save_model(random_weights(config, seed, scale), out, Json{{"kind", "random"}, {"seed", seed}, {"scale", scale}});
  } else {
    throw ConfigError(r.path("model") + ": expected \"planted\" or \"random\"");
  }
  std::cout << out.string() << '\n';
  return 0;
}

// {"model": "model.xflw", "count": 100, "n_patches": 16, "object_begin": 4,
//  "object_end": 8, "object_length": 4, "n_filler": 5, "n_registers": 0,
//  "score_capitalized": false, "seed": 0, "file": "tasks.json"}
int gen_tasks_cmd(const GlobalFlags& g) {
  const fs::path cfg_path(g.config);
  const Json j = read_json_file(cfg_path);
  JsonReader r(j, "gen_tasks");
  r.only({"model", "count", "n_patches", "object_begin", "object_end", "object_length", "n_filler", "n_registers",
          "score_capitalized", "n_attributes", "seed", "file"});
  fs::path model_path(r.str("model"));
  if (model_path.is_relative()) model_path = cfg_path.parent_path() / model_path;
  const auto model = load_model(model_path);

  TaskGenParams p;
  p.n_patches = r.u64_or("n_patches", p.n_patches);
  if (r.has("object_begin")) p.object_begin = r.u64("object_begin");
  if (r.has("object_end")) p.object_end = r.u64("object_end");
  p.object_length = r.u64_or("object_length", p.object_length);
  p.n_filler = r.u64_or("n_filler", p.n_filler);
  p.n_registers = r.u64_or("n_registers", p.n_registers);
  bool capfix = false;
  if (model.metadata.is_object()) {
    if (model.metadata.contains("schedule")) {
      capfix = schedule_from_json(model.metadata["schedule"], "model.metadata.schedule").has(StageKind::CapFix);
    }
    if (model.metadata.contains("n_attributes")) p.circuit.n_attributes = model.metadata["n_attributes"].get<std::size_t>();
  }
  p.circuit.n_attributes = r.u64_or("n_attributes", p.circuit.n_attributes);
  p.score_capitalized = r.boolean_or("score_capitalized", capfix);

  const std::uint64_t seed = g.seed.value_or(r.u64_or("seed", 0));
  const auto tasks = gen_tasks(p, model.weights.config, seed, r.u64_or("count", 100));
  const fs::path out = out_dir_or(g, cfg_path.parent_path()) / r.str_or("file", "tasks.json");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json_file(out, tasks_to_json(tasks));
  std::cout << out.string() << '\n';
  return 0;
}

int run_cmd(const GlobalFlags& g, std::optional<ExperimentKind> only) {
  auto experiments = load_experiments(g.config);
  bool passed = true;
  for (auto& e : experiments) {
    if (only && e.kind != *only) {
      throw UsageError("experiment '" + e.id + "' has kind " + std::string(to_string(e.kind)) + ", expected " +
                       std::string(to_string(*only)));
    }
    if (!g.out.empty()) e.out_dir = g.out;
    if (g.seed) e.seed = *g.seed;
    if (g.svg) e.svg = true;
    const auto result = run(e);
    for (const auto& f : result.files) std::cout << f.string() << '\n';
    if (!result.passed) {
      std::cerr << e.id << ": verification failed\n";
      passed = false;
    }
  }
  return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-knockout tracing of information flow in multimodal transformers"};
  app.require_subcommand(1);
  GlobalFlags g;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the seed");
    sub->add_option("--out", g.out, "Output directory");
    sub->add_flag("--svg", g.svg, "Also write SVG charts");
  };
  auto* gm = app.add_subcommand("gen-model", "Write a planted or random model to an XFLW file");
  auto* gt = app.add_subcommand("gen-tasks", "Generate planted tasks for a model");
  auto* rn = app.add_subcommand("run", "Run the experiments in a config file");
  auto* bn = app.add_subcommand("bench", "Run BENCH experiments");
  auto* vf = app.add_subcommand("verify", "Run VERIFY experiments; exit 1 when a check fails");
  for (auto* s : {gm, gt, rn, bn, vf}) add_common(s);

  CLI11_PARSE(app, argc, argv);
  for (auto* s : {gm, gt, rn, bn, vf}) {
    if (s->parsed() && s->count("--seed") > 0) g.seed = seed;
  }

  try {
    if (gm->parsed()) return gen_model(g);
    if (gt->parsed()) return gen_tasks_cmd(g);
    if (rn->parsed()) return run_cmd(g, std::nullopt);
    if (bn->parsed()) return run_cmd(g, ExperimentKind::Bench);
    if (vf->parsed()) return run_cmd(g, ExperimentKind::Verify);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
