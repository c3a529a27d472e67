// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/experiment.hpp"

#include <cstdio>
#include <fstream>

#include "xflow/benchmark.hpp"
#include "xflow/error.hpp"
#include "xflow/svg.hpp"
#include "xflow/weight_file.hpp"

namespace xflow {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class F>
auto field(const JsonReader& r, std::string_view key, F&& parse) {
  try {
    return parse(r.str(key));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(r.path(key), 0) == 0) throw;
    throw ConfigError(r.path(key) + ": " + msg);
  }
}

void require_set(const std::vector<Task>& tasks, const std::string& name, const std::string& field_name) {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!tasks[i].layout.contains(name)) {
      throw ConfigError(field_name + ": position set '" + name + "' is not defined for task " + std::to_string(i));
    }
  }
}

}  // namespace

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Knockout: return "KNOCKOUT";
    case ExperimentKind::LogitLens: return "LOGIT_LENS";
    case ExperimentKind::ModuleKnockout: return "MODULE_KNOCKOUT";
    case ExperimentKind::Prune: return "PRUNE";
    case ExperimentKind::Bench: return "BENCH";
    case ExperimentKind::Verify: return "VERIFY";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::Knockout, ExperimentKind::LogitLens, ExperimentKind::ModuleKnockout,
                 ExperimentKind::Prune, ExperimentKind::Bench, ExperimentKind::Verify}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir,
                                      const std::string& where) {
  JsonReader r(j, where);
  r.only({"id", "kind", "model", "tasks", "out_dir", "task_family", "source", "target", "module", "positions",
          "pruned_set", "start_layers", "repetitions", "window", "window_mode", "centers", "measure", "max_tasks",
          "seed", "threads", "svg"});
  ExperimentConfig c;
  c.id = r.str_or("id", c.id);
  if (c.id.empty() || c.id.find_first_of("/\\,") != std::string::npos) {
    throw ConfigError(r.path("id") + ": must be non-empty without '/', '\\' or ','");
  }
  c.kind = field(r, "kind", parse_experiment_kind);
  c.model_path = resolve(base_dir, r.str("model"));
  c.tasks_path = resolve(base_dir, r.str("tasks"));
  if (r.has("out_dir")) c.out_dir = resolve(base_dir, r.str("out_dir"));
  c.task_family = r.str_or("task_family", c.task_family);

  switch (c.kind) {
    case ExperimentKind::Knockout:
      c.source = r.str("source");
      c.target = r.str("target");
      break;
    case ExperimentKind::ModuleKnockout:
      c.module = field(r, "module", parse_module_kind);
      c.positions = r.str("positions");
      break;
    case ExperimentKind::Prune:
      c.pruned_set = r.str_or("pruned_set", c.pruned_set);
      break;
    case ExperimentKind::Bench:
      c.start_layers = r.indices("start_layers");
      c.repetitions = r.u64_or("repetitions", c.repetitions);
      if (c.repetitions < 3) throw ConfigError(r.path("repetitions") + ": must be at least 3");
      break;
    case ExperimentKind::LogitLens:
    case ExperimentKind::Verify:
      break;
  }

  c.window.k = r.u64_or("window", c.window.k);
  if (c.window.k < 1) throw ConfigError(r.path("window") + ": must be at least 1");
  if (c.kind == ExperimentKind::ModuleKnockout) c.window.mode = WindowMode::Forward;
  if (r.has("window_mode")) c.window.mode = field(r, "window_mode", parse_window_mode);
  if (r.has("centers")) c.window.centers = r.indices("centers");
  if (r.has("measure")) c.measure = field(r, "measure", parse_measure_position);
  if (r.has("max_tasks")) c.max_tasks = r.u64("max_tasks");
  c.seed = r.u64_or("seed", c.seed);
  c.threads = r.u64_or("threads", c.threads);
  if (c.threads < 1) throw ConfigError(r.path("threads") + ": must be at least 1");
  c.svg = r.boolean_or("svg", c.svg);
  return c;
}

std::vector<ExperimentConfig> load_experiments(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const auto base = path.parent_path();
  std::vector<ExperimentConfig> out;
  if (j.is_object() && j.contains("experiments")) {
    JsonReader r(j, path.filename().string());
    r.only({"experiments"});
    const auto& arr = r.raw("experiments");
    if (!arr.is_array()) throw ConfigError(r.path("experiments") + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(experiment_from_json(arr[i], base, "experiments[" + std::to_string(i) + "]"));
    }
  } else {
    out.push_back(experiment_from_json(j, base));
  }
  return out;
}

void write_knockout_csv(std::ostream& out, const CurveLabels& l, const LayerCurve& curve) {
  out << kKnockoutCsvHeader << '\n';
  for (const auto& p : curve.points) {
    out << l.experiment_id << ',' << l.task_family << ',' << l.kind << ',' << l.source_set << ',' << l.target_set
        << ',' << p.center << ',' << l.window << ',' << l.window_mode << ',' << p.n << ',' << num(p.p1_mean) << ','
        << num(p.p2_mean) << ',' << num(p.pc_mean) << ',' << num(p.pc_sem) << '\n';
  }
}

LensTable compute_lens(const ModelWeights& weights, std::span<const Task> tasks, MeasurePosition measure) {
  if (tasks.empty()) throw UsageError("logit lens needs at least one task");
  const std::size_t n_layers = weights.config.n_layers;
  std::vector<std::array<std::vector<double>, 3>> samples(n_layers + 1);
  for (const auto& task : tasks) {
    const auto in = prepare_scoring(task, weights, measure);
    const auto trace = forward(weights, in.embeddings, in.layout, {}, {TraceDetail::Hidden, AttentionPath::Auto});
    const std::uint32_t ids[3] = {task.answer_id, task.answer_cap_id, task.false_option_id};
    const auto lens = logit_lens_curve(trace, in.layout.last(), ids, weights);
    for (std::size_t l = 0; l <= n_layers; ++l)
      for (std::size_t w = 0; w < 3; ++w) samples[l][w].push_back(lens.probs[l][w]);
  }
  LensTable t;
  for (const auto& layer : samples) {
    std::array<MeanSem, 3> row;
    for (std::size_t w = 0; w < 3; ++w) row[w] = mean_sem(layer[w]);
    t.rows.push_back(row);
  }
  return t;
}

void write_lens_csv(std::ostream& out, const LensTable& table) {
  out << kLensCsvHeader << '\n';
  for (std::size_t l = 0; l < table.rows.size(); ++l) {
    for (std::size_t w = 0; w < 3; ++w) {
      out << l << ',' << LensTable::kRoles[w] << ',' << num(table.rows[l][w].mean) << ','
          << num(table.rows[l][w].sem) << '\n';
    }
  }
}

std::vector<JaccardPoint> module_knockout_jaccard(const ModelWeights& weights, std::span<const Task> tasks,
                                                  ModuleKind module, const std::string& positions,
                                                  const SweepOptions& options) {
  if (tasks.empty()) throw UsageError("module knockout needs at least one task");
  const auto tmpl = InterventionTemplate::module_knockout(module, positions);
  const std::size_t n_layers = weights.config.n_layers;
  std::vector<JaccardPoint> out;
  std::vector<ScoringInput> inputs;
  std::vector<Matrix> base;
  for (const auto& t : tasks) {
    inputs.push_back(prepare_scoring(t, weights, options.measure));
    base.push_back(forward(weights, inputs.back().embeddings, inputs.back().layout, {}).final_hidden());
  }
  for (std::size_t c : sweep_centers(tmpl, options, n_layers)) {
    const auto plan = tmpl.instantiate(c, window_layers(c, options.window.k, n_layers, options.window.mode));
    std::vector<double> per_task;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const auto& pos = inputs[t].layout.at(positions);
      if (pos.empty()) continue;
      const auto knocked = forward(weights, inputs[t].embeddings, inputs[t].layout, plan).final_hidden();
      WordSet before, after;
      for (std::size_t p : pos) {
        for (auto id : topk_words(base[t].row(p), weights, 10)) before.insert(id);
        for (auto id : topk_words(knocked.row(p), weights, 10)) after.insert(id);
      }
      per_task.push_back(jaccard(before, after));
    }
    if (per_task.empty()) throw UsageError("position set '" + positions + "' is empty for every task");
    out.push_back({c, per_task.size(), mean_sem(per_task)});
  }
  return out;
}

void write_jaccard_csv(std::ostream& out, const std::string& position_set, std::span<const JaccardPoint> points) {
  out << kJaccardCsvHeader << '\n';
  for (const auto& p : points) {
    out << p.center << ',' << position_set << ',' << p.n << ',' << num(p.jaccard.mean) << ',' << num(p.jaccard.sem)
        << '\n';
  }
}

Json verify_report_json(const VerifyReport& r) {
  return Json{{"n_tasks", r.n_tasks},
              {"accuracy", r.accuracy},
              {"min_answer_prob", r.min_answer_prob},
              {"max_off_target_attention", r.max_off_target},
              {"max_residual_error", r.max_residual_error},
              {"checks",
               {{"accuracy", r.accuracy_ok}, {"attention", r.attention_ok}, {"residual_identity", r.residual_ok}}},
              {"passed", r.passed()}};
}

void write_verify_csv(std::ostream& out, const VerifyReport& r) {
  out << kVerifyCsvHeader << '\n';
  out << "accuracy," << num(r.accuracy) << ",1," << (r.accuracy_ok ? "true" : "false") << '\n';
  out << "max_off_target_attention," << num(r.max_off_target) << ',' << num(kMaxOffTargetAttention) << ','
      << (r.attention_ok ? "true" : "false") << '\n';
  out << "max_residual_error," << num(r.max_residual_error) << ',' << num(kResidualTolerance) << ','
      << (r.residual_ok ? "true" : "false") << '\n';
}

RunResult run(const ExperimentConfig& c) {
  const auto loaded = load_model(c.model_path);
  const ModelWeights& weights = loaded.weights;
  std::vector<Task> tasks = tasks_from_json(read_json_file(c.tasks_path));
  if (c.max_tasks && *c.max_tasks < tasks.size()) tasks.resize(*c.max_tasks);
  if (tasks.empty()) throw ConfigError("tasks: no tasks to run");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].patch_features.cols() != weights.config.d_model) {
      throw ConfigError("tasks[" + std::to_string(i) + "]: d_model does not match the model");
    }
  }

  std::filesystem::create_directories(c.out_dir);
  RunResult result;
  const auto base = c.out_dir / c.id;
  auto path_for = [&](const std::string& suffix) {
    auto p = base;
    p += suffix;
    result.files.push_back(p);
    return p;
  };

  SweepOptions options{c.window, c.measure, c.threads};
  const std::size_t n_layers = weights.config.n_layers;
  for (std::size_t center : c.window.centers) {
    const std::size_t limit = c.kind == ExperimentKind::Prune ? n_layers : n_layers - 1;
    if (center > limit) throw ConfigError("centers: " + std::to_string(center) + " is beyond the last layer");
  }

  auto emit_curve = [&](const InterventionTemplate& tmpl, CurveLabels labels, const std::string& y_label) {
    const auto curve = sweep(weights, tasks, tmpl, options);
    {
      auto out = open_out(path_for(".csv"));
      write_knockout_csv(out, labels, curve);
    }
    if (c.svg) {
      Chart chart{c.id, "layer", y_label, {curve_series(curve, labels.source_set + "->" + labels.target_set)}};
      emit_svg(chart, path_for(".svg"));
    }
  };

  switch (c.kind) {
    case ExperimentKind::Knockout: {
      require_set(tasks, c.source, "source");
      require_set(tasks, c.target, "target");
      emit_curve(InterventionTemplate::attention(c.source, c.target),
                 {c.id, c.task_family, "KNOCKOUT", c.source, c.target, c.window.k, std::string(to_string(c.window.mode))},
                 "p_c (%)");
      break;
    }
    case ExperimentKind::ModuleKnockout: {
      require_set(tasks, c.positions, "positions");
      const std::string mod(to_string(c.module));
      emit_curve(InterventionTemplate::module_knockout(c.module, c.positions),
                 {c.id, c.task_family, "MODULE_KNOCKOUT", mod, c.positions, c.window.k,
                  std::string(to_string(c.window.mode))},
                 "p_c (%)");
      const auto points = module_knockout_jaccard(weights, tasks, c.module, c.positions, options);
      auto out = open_out(path_for("_jaccard.csv"));
      write_jaccard_csv(out, c.positions, points);
      break;
    }
    case ExperimentKind::Prune: {
      require_set(tasks, c.pruned_set, "pruned_set");
      // A prune from layer X acts on the forward window X..L-1.
      emit_curve(InterventionTemplate::prune(c.pruned_set),
                 {c.id, c.task_family, "PRUNE", c.pruned_set, std::string(sets::kAll), 0, "FORWARD"}, "p_c (%)");
      break;
    }
    case ExperimentKind::LogitLens: {
      const auto table = compute_lens(weights, tasks, c.measure);
      {
        auto out = open_out(path_for(".csv"));
        write_lens_csv(out, table);
      }
      if (c.svg) {
        Chart chart{c.id, "layer", "probability", {}};
        for (std::size_t w = 0; w < 3; ++w) {
          ChartSeries s{std::string(LensTable::kRoles[w]), {}, {}};
          for (std::size_t l = 0; l < table.rows.size(); ++l) {
            s.x.push_back(static_cast<double>(l));
            s.y.push_back(table.rows[l][w].mean);
          }
          chart.series.push_back(std::move(s));
        }
        emit_svg(chart, path_for(".svg"));
      }
      break;
    }
    case ExperimentKind::Bench: {
      if (c.start_layers.empty()) throw ConfigError("start_layers: at least one start layer is required");
      const auto bench = benchmark_prune(weights, tasks, c.start_layers, c.repetitions);
      {
        auto out = open_out(path_for(".csv"));
        write_bench_csv(out, bench);
      }
      auto raw = open_out(path_for("_raw.csv"));
      write_bench_raw_csv(raw, bench);
      break;
    }
    case ExperimentKind::Verify: {
      if (!loaded.metadata.is_object() || !loaded.metadata.contains("schedule")) {
        throw ConfigError("model: VERIFY needs a model file that records its flow schedule");
      }
      const auto schedule = schedule_from_json(loaded.metadata["schedule"], "model.metadata.schedule");
      const auto report = verify_circuit(weights, schedule, tasks);
      write_json_file(path_for(".json"), verify_report_json(report));
      auto out = open_out(path_for(".csv"));
      write_verify_csv(out, report);
      result.passed = report.passed();
      break;
    }
  }
  return result;
}

}  // namespace xflow
