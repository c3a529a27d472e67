// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configs and the runner that turns them into CSV / SVG / JSON
// result files.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xflow/circuits.hpp"
#include "xflow/json_io.hpp"
#include "xflow/metrics.hpp"
#include "xflow/sweep.hpp"

namespace xflow {

enum class ExperimentKind { Knockout, LogitLens, ModuleKnockout, Prune, Bench, Verify };

std::string_view to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view name);

struct ExperimentConfig {
  std::string id = "experiment";
  ExperimentKind kind = ExperimentKind::Knockout;
  std::filesystem::path model_path;
  std::filesystem::path tasks_path;
  std::filesystem::path out_dir = ".";
  std::string task_family = "planted";

  std::string source;                        // KNOCKOUT
  std::string target;                        // KNOCKOUT
  ModuleKind module = ModuleKind::Mhat;      // MODULE_KNOCKOUT
  std::string positions;                     // MODULE_KNOCKOUT
  std::string pruned_set{sets::kImage};      // PRUNE
  std::vector<std::size_t> start_layers;     // BENCH
  std::size_t repetitions = 5;               // BENCH

  WindowSweep window;  // mode defaults to FORWARD for MODULE_KNOCKOUT
  MeasurePosition measure = MeasurePosition::FirstSubword;
  std::optional<std::size_t> max_tasks;      // use only the first n tasks
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool svg = false;
};

/// One config object. Relative paths resolve against `base_dir`. Missing or
/// mistyped fields raise ConfigError naming the field.
ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir,
                                      const std::string& where = "experiment");

/// A config file holds either one experiment object or {"experiments": [...]}.
std::vector<ExperimentConfig> load_experiments(const std::filesystem::path& path);

inline constexpr std::string_view kKnockoutCsvHeader =
    "experiment_id,task_family,kind,source_set,target_set,center_layer,window,window_mode,n,p1_mean,p2_mean,"
    "pc_mean,pc_sem";
inline constexpr std::string_view kLensCsvHeader = "layer,word_role,prob_mean,prob_sem";
inline constexpr std::string_view kJaccardCsvHeader = "center_layer,position_set,n,jaccard_mean,jaccard_sem";
inline constexpr std::string_view kVerifyCsvHeader = "check,value,threshold,pass";

/// Labels written into one knockout CSV row set.
struct CurveLabels {
  std::string experiment_id;
  std::string task_family;
  std::string kind;
  std::string source_set;
  std::string target_set;
  std::size_t window = 0;
  std::string window_mode;
};

void write_knockout_csv(std::ostream& out, const CurveLabels& labels, const LayerCurve& curve);

/// Mean and SEM over tasks of the lens probabilities of the answer, its
/// capitalized variant and the false option, at the scored position.
struct LensTable {
  static constexpr std::string_view kRoles[3] = {"answer", "answer_cap", "false_option"};
  std::vector<std::array<MeanSem, 3>> rows;  // one per layer 0..L
};

LensTable compute_lens(const ModelWeights& weights, std::span<const Task> tasks, MeasurePosition measure);
void write_lens_csv(std::ostream& out, const LensTable& table);

/// Per-center Jaccard similarity between the union of top-10 words decoded
/// from the final hidden states at the knocked positions, baseline vs
/// knocked; averaged over tasks.
struct JaccardPoint {
  std::size_t center = 0;
  std::size_t n = 0;
  MeanSem jaccard;
};

std::vector<JaccardPoint> module_knockout_jaccard(const ModelWeights& weights, std::span<const Task> tasks,
                                                  ModuleKind module, const std::string& positions,
                                                  const SweepOptions& options);
void write_jaccard_csv(std::ostream& out, const std::string& position_set, std::span<const JaccardPoint> points);

Json verify_report_json(const VerifyReport& report);
void write_verify_csv(std::ostream& out, const VerifyReport& report);

struct RunResult {
  std::vector<std::filesystem::path> files;
  bool passed = true;  // false only when a VERIFY check fails
};

/// Loads the model and tasks, runs the experiment and writes its result files
/// into out_dir as <id>.csv (plus <id>.svg, <id>_raw.csv, <id>_jaccard.csv or
/// <id>.json depending on the kind).
RunResult run(const ExperimentConfig& config);

}  // namespace xflow
