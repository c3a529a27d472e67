// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "xflow/benchmark.hpp"
#include "xflow/circuits.hpp"
#include "xflow/experiment.hpp"
#include "xflow/json_io.hpp"
#include "xflow/metrics.hpp"
#include "xflow/sweep.hpp"
#include "xflow/weight_file.hpp"

namespace fs = std::filesystem;
using namespace xflow;
using namespace xflow::testing;

namespace {

using Clock = std::chrono::steady_clock;
using Centers = std::set<std::size_t>;

constexpr std::size_t kLayers = 10;
constexpr double kCollapsePc = -90.0;
constexpr double kIntactPc = 1.0;

struct Outcome {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

LayerCurve k_sweep(const ModelWeights& w, std::span<const Task> tasks, const std::string& src,
                   const std::string& dst, std::size_t k = 1) {
  SweepOptions o;
  o.window.k = k;
  o.window.mode = WindowMode::Centered;
  o.threads = 1;
  return sweep(w, tasks, InterventionTemplate::attention(src, dst), o);
}

// Collapse exactly at `collapse`, intact everywhere else.
void expect_signature(Outcome& out, const LayerCurve& curve, const Centers& collapse, const std::string& name) {
  for (const auto& p : curve.points) {
    const bool want = collapse.count(p.center) > 0;
    if (want && p.pc_mean > kCollapsePc) {
      out.fail(fmt("%s: center %zu p_c %.3f, expected collapse", name.c_str(), p.center, p.pc_mean));
    } else if (!want && std::abs(p.pc_mean) > kIntactPc) {
      out.fail(fmt("%s: center %zu p_c %.3f, expected intact", name.c_str(), p.center, p.pc_mean));
    }
  }
}

std::vector<double> last_logits(const ModelWeights& w, const ForwardTrace& t) {
  return unembed_logits(t.final_hidden().row(t.final_hidden().rows() - 1), w);
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Context {
  ModelWeights two_stage;
  std::vector<Task> tasks;  // 200 planted tasks
};

Outcome c1_c2(const Context& cx, Outcome& c2) {
  Outcome c1;
  const auto t0 = Clock::now();
  expect_signature(c1, k_sweep(cx.two_stage, cx.tasks, "IMAGE", "QUESTION"), {0, 1, 3, 4}, "IMAGE->QUESTION");
  expect_signature(c1, k_sweep(cx.two_stage, cx.tasks, "IMG_OTH", "QUESTION"), {0, 1}, "IMG_OTH->QUESTION");
  expect_signature(c1, k_sweep(cx.two_stage, cx.tasks, "IMG_OBJ", "QUESTION"), {3, 4}, "IMG_OBJ->QUESTION");
  const double t1 = seconds_since(t0);
  expect_signature(c2, k_sweep(cx.two_stage, cx.tasks, "QUESTION", "LAST"), {6, 7}, "QUESTION->LAST");
  expect_signature(c2, k_sweep(cx.two_stage, cx.tasks, "IMAGE", "LAST"), {}, "IMAGE->LAST");
  expect_signature(c2, k_sweep(cx.two_stage, cx.tasks, "LAST", "LAST"), {}, "LAST->LAST");
  const double total = seconds_since(t0);
  if (total >= 60.0) c1.fail(fmt("sweeps took %.1f s", total));
  if (c1.ok) c1.detail = fmt("200 tasks, 3 sweeps in %.2f s (all 6 sweeps %.2f s)", t1, total);
  if (c2.ok) c2.detail = "QUESTION->LAST collapses at {6,7} only; IMAGE->LAST and LAST->LAST intact";
  return c1;
}

Outcome c3(const Context& cx) {
  Outcome out;
  const auto sch = FlowSchedule::two_stage();
  std::vector<double> base;
  for (const auto& t : cx.tasks) {
    base.push_back(answer_probability(cx.two_stage, prepare_scoring(t, cx.two_stage, MeasurePosition::FirstSubword), {}));
  }
  std::size_t checked = 0, disagree = 0, collapses = 0;
  for (const char* src : {"IMAGE", "IMG_OBJ", "IMG_OTH", "QUESTION", "LAST"})
    for (const char* dst : {"QUESTION", "LAST"})
      for (std::size_t c = 0; c < kLayers; ++c) {
        InterventionPlan plan;
        plan.knockouts.push_back({src, dst, {c}});
        for (std::size_t i = 0; i < cx.tasks.size(); ++i) {
          const Effect want = oracle_effect(sch, kLayers, cx.tasks[i].layout, plan);
          const double p2 = answer_probability(
              cx.two_stage, prepare_scoring(cx.tasks[i], cx.two_stage, MeasurePosition::FirstSubword), plan);
          const double pc = relative_change(base[i], p2);
          ++checked;
          collapses += want == Effect::Collapse;
          if (!matches_effect(want, pc)) {
            ++disagree;
            out.fail(fmt("%s->%s center %zu task %zu: oracle %s, p_c %.3f", src, dst, c, i,
                         std::string(to_string(want)).c_str(), pc));
          }
        }
      }
  if (out.ok) out.detail = fmt("%zu (plan, task) pairs, %zu predicted collapses, 0 disagreements", checked, collapses);
  else out.detail += fmt(" (%zu disagreements)", disagree);
  return out;
}

Outcome c4(const Context& cx) {
  Outcome out;
  std::size_t compared = 0;
  auto same = [&](const ModelWeights& w, const Matrix& x, const SequenceLayout& layout) {
    const auto base = forward(w, x, layout, {});
    InterventionPlan none;
    none.knockouts.push_back({"NONE", "ALL", {0}});
    InterventionPlan redundant;
    std::vector<std::size_t> all(w.config.n_layers);
    for (std::size_t l = 0; l < all.size(); ++l) all[l] = l;
    redundant.knockouts.push_back({"QUESTION", "IMAGE", all});
    for (const auto* plan : {&none, &redundant}) {
      const auto t = forward(w, x, layout, *plan);
      if (last_logits(w, t) != last_logits(w, base) || t.output != base.output) out.fail("logits differ");
      ++compared;
    }
  };
  for (std::size_t i = 0; i < 20; ++i) {
    const auto s = prepare_scoring(cx.tasks[i], cx.two_stage, MeasurePosition::FirstSubword);
    same(cx.two_stage, s.embeddings, s.layout);
  }
  auto cfg = small_config(4, 32, 4, 2, 24);
  cfg.use_norm = true;
  const auto rw = random_weights(cfg, 11, 0.1f);
  SequenceLayout layout(12, 6);
  layout.set(sets::kQuestion, {12, 13, 14, 15, 16});
  same(rw, random_matrix(18, 32, 12), layout);

  // Byte-identical CSVs from two runs of the same experiment.
  const fs::path dir = fs::temp_directory_path() / ("xflow_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_model(cx.two_stage, dir / "model.xflw", Json{{"schedule", to_json(FlowSchedule::two_stage())}});
  write_json_file(dir / "tasks.json", tasks_to_json(std::span(cx.tasks).first(40)));
  std::vector<std::string> csvs;
  for (const char* run_dir : {"a", "b"}) {
    ExperimentConfig e;
    e.id = "determinism";
    e.kind = ExperimentKind::Knockout;
    e.model_path = dir / "model.xflw";
    e.tasks_path = dir / "tasks.json";
    e.out_dir = dir / run_dir;
    e.source = "IMAGE";
    e.target = "QUESTION";
    e.window.k = 1;
    run(e);
    csvs.push_back(slurp(dir / run_dir / "determinism.csv"));
  }
  if (csvs[0].empty() || csvs[0] != csvs[1]) out.fail("CSV bytes differ between runs");
  fs::remove_all(dir);
  if (out.ok) out.detail = fmt("%zu plan comparisons bitwise equal; CSV runs byte-identical", compared);
  return out;
}

Outcome c5() {
  Outcome out;
  TransformerConfig cfg = small_config(8, 64, 4, 4, 64);
  const auto w = random_weights(cfg, 5, 0.05f);
  SequenceLayout layout(48, 8);
  std::vector<std::size_t> text;
  for (std::size_t i = 48; i < 56; ++i) text.push_back(i);
  layout.set("TEXT", text);
  const Matrix x = random_matrix(56, 64, 6);
  double worst = 0.0;
  for (std::size_t X : {0, 2, 4, 6, 8}) {
    InterventionPlan prune, ko;
    prune.prune = PruneSpec{X, "IMAGE"};
    std::vector<std::size_t> layers;
    for (std::size_t l = X; l < 8; ++l) layers.push_back(l);
    if (!layers.empty()) ko.knockouts.push_back({"IMAGE", "TEXT", layers});
    const double d = max_diff(last_logits(w, forward(w, x, layout, prune)), last_logits(w, forward(w, x, layout, ko)));
    worst = std::max(worst, d);
    if (d >= 1e-5) out.fail(fmt("X=%zu max |logit diff| %.3g", X, d));
  }
  if (out.ok) out.detail = fmt("max |logit diff| %.3g over X in {0,2,4,6,8}", worst);
  return out;
}

Outcome c6() {
  Outcome out;
  const auto t0 = Clock::now();
  TransformerConfig cfg = planted_config(12);
  FlowSchedule sch{{{StageKind::Broad, {0}}, {StageKind::Targeted, {1}}, {StageKind::Readout, {2, 3}}}};
  const auto w = plant_circuit(cfg, sch);
  TaskGenParams gp;
  gp.n_patches = 512;
  gp.object_length = 32;
  gp.n_filler = 13;  // 13 fillers + 2 options + prompt = 16 text tokens
  const auto tasks = gen_tasks(gp, cfg, 7, 3);
  if (tasks[0].layout.n_text() != 16) out.fail("text length is not 16");
  const std::vector<std::size_t> xs{4};
  const auto r = benchmark_prune(w, tasks, xs, 5);
  const auto& row = r.rows.at(0);
  const double total = seconds_since(t0);
  if (row.speedup_vs_full < 1.3) out.fail(fmt("median speedup %.2fx", row.speedup_vs_full));
  if (!(row.answer_prob_delta < 1e-6)) out.fail(fmt("answer prob delta %.3g", row.answer_prob_delta));
  if (total >= 120.0) out.fail(fmt("benchmark took %.1f s", total));
  if (out.ok) {
    out.detail = fmt("median %.1f ms -> %.1f ms, speedup %.2fx, delta %.3g, %.1f s total", r.full_median_ms,
                     row.median_ms, row.speedup_vs_full, row.answer_prob_delta, total);
  }
  return out;
}

Outcome c7() {
  Outcome out;
  {
    const auto cfg = small_config(3, 32, 4, 4, 20);
    const auto w = random_weights(cfg, 3, 0.2f);
    const SequenceLayout layout(10, 6);
    const Matrix x = random_matrix(16, 32, 4);
    const ForwardOptions g{TraceDetail::Final, AttentionPath::Grouped}, m{TraceDetail::Final, AttentionPath::MultiHead};
    const auto a = forward(w, x, layout, {}, g), b = forward(w, x, layout, {}, m);
    if (!(a.final_hidden() == b.final_hidden()) || a.output != b.output) out.fail("n_kv = H differs from MHA");
  }
  double worst_row = 0.0, worst_res = 0.0;
  for (std::size_t kv : {1, 2}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      auto cfg = small_config(3, 32, 4, kv, 20);
      cfg.use_norm = seed % 2 == 1;
      const auto w = random_weights(cfg, 40 + seed, 0.2f);
      const SequenceLayout layout(10, 6);
      const auto t = forward(w, random_matrix(16, 32, seed), layout, {}, {TraceDetail::Full, AttentionPath::Auto});
      for (const auto& layer : t.attention)
        for (const auto& a : layer)
          for (std::size_t r = 0; r < a.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c);
            worst_row = std::max(worst_row, std::abs(s - 1.0));
          }
      for (std::size_t l = 0; l < cfg.n_layers; ++l)
        for (std::size_t i = 0; i < t.hidden[l].size(); ++i) {
          const double want = static_cast<double>(t.hidden[l].data()[i]) + t.attn_out[l].data()[i] +
                              t.ffn_out[l].data()[i];
          worst_res = std::max(worst_res, std::abs(t.hidden[l + 1].data()[i] - want) / std::max(1.0, std::abs(want)));
        }
    }
  }
  if (worst_row > 1e-9) out.fail(fmt("row sum error %.3g", worst_row));
  if (worst_res > 1e-6) out.fail(fmt("residual error %.3g", worst_res));
  if (out.ok) out.detail = fmt("bitwise MHA match; n_kv in {1,2}: row sum err %.2g, residual err %.2g", worst_row, worst_res);
  return out;
}

Outcome c8() {
  Outcome out;
  auto sch = FlowSchedule::two_stage();
  sch.stages.push_back({StageKind::CapFix, {9}});
  const auto w = plant_circuit(planted_config(), sch);
  TaskGenParams gp;
  gp.score_capitalized = true;
  const auto tasks = gen_tasks(gp, planted_config(), 8, 200);
  double worst = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto s = prepare_scoring(tasks[i], w, MeasurePosition::FirstSubword);
    const auto tr = forward(w, s.embeddings, s.layout, {}, {TraceDetail::Hidden, AttentionPath::Auto});
    const std::size_t last = s.layout.last();
    if (topk_words(tr.hidden[8].row(last), w, 1)[0] != tasks[i].answer_id) out.fail(fmt("task %zu: layer 8 arg-max", i));
    if (topk_words(tr.hidden[kLayers].row(last), w, 1)[0] != tasks[i].answer_cap_id) {
      out.fail(fmt("task %zu: layer L arg-max", i));
    }
    std::vector<std::uint32_t> all(w.config.vocab_size);
    for (std::uint32_t v = 0; v < all.size(); ++v) all[v] = v;
    const auto lens = logit_lens_curve(tr, last, all, w);
    for (std::size_t v = 0; v < all.size(); ++v) worst = std::max(worst, std::abs(lens.probs[kLayers][v] - tr.output[v]));
  }
  if (worst > 1e-12) out.fail(fmt("lens vs output %.3g", worst));
  if (out.ok) out.detail = fmt("200 tasks; lowercase leads at layer 8, capitalized at L; lens err %.2g", worst);
  return out;
}

Outcome c9() {
  Outcome out;
  {
    const auto cfg = small_config(4, 32, 4, 2, 20);
    const auto w = random_weights(cfg, 9, 0.3f);
    const SequenceLayout layout(8, 4);
    const Matrix x = random_matrix(12, 32, 10);
    InterventionPlan plan;
    plan.module_knockouts.push_back({ModuleKind::Mhat, "ALL", {0, 1, 2, 3}});
    plan.module_knockouts.push_back({ModuleKind::Ffn, "ALL", {0, 1, 2, 3}});
    const double d = max_abs_diff(forward(w, x, layout, plan).final_hidden(), x);
    if (d > 1e-6) out.fail(fmt("telescoping error %.3g", d));
  }
  const WordSet self{1, 5, 9, 12};
  if (jaccard(self, self) != 1.0) out.fail("jaccard(self, self) != 1");

  auto sch = FlowSchedule::two_stage();
  sch.stages[1].through_ffn = true;
  const auto w = plant_circuit(planted_config(), sch);
  const auto tasks = gen_tasks({}, planted_config(), 21, 50);
  SweepOptions o;
  o.window.k = 9;
  o.window.mode = WindowMode::Forward;
  o.window.centers = {0};
  const auto pts = module_knockout_jaccard(w, tasks, ModuleKind::Ffn, "QUESTION", o);
  const double j = pts.at(0).jaccard.mean;
  if (!(j < 0.5)) out.fail(fmt("FFN-path jaccard %.3f", j));
  if (out.ok) out.detail = fmt("telescoping exact; FFN-path knockout jaccard %.3f over %zu tasks", j, pts.at(0).n);
  return out;
}

Outcome c10() {
  Outcome out;
  const auto cfg = planted_config();
  const auto w = plant_circuit(cfg, FlowSchedule::two_stage());
  TaskGenParams gp;
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < 200; ++i) {
    gp.n_registers = 1 + i % 4;
    tasks.push_back(gen_task(gp, cfg, 1000 + i));
  }
  for (auto& t : tasks) {
    const auto part = partition_by_norm(t.patch_features, 57.0f);
    if (part.high != t.layout.at(sets::kRegister)) out.fail("register partition mismatch");
    const auto& img = t.layout.at(sets::kImage);
    t.layout.set("IMAGE_NOREG", set_difference(img, part.high));
    t.layout.set("IMG_OTH_NOREG", set_difference(t.layout.at(sets::kImgOth), part.high));
    t.layout.set("IMG_OBJ_NOREG", set_difference(t.layout.at(sets::kImgObj), part.high));
  }
  expect_signature(out, k_sweep(w, tasks, "IMAGE_NOREG", "QUESTION"), {0, 1, 3, 4}, "IMAGE_NOREG->QUESTION");
  expect_signature(out, k_sweep(w, tasks, "IMG_OTH_NOREG", "QUESTION"), {0, 1}, "IMG_OTH_NOREG->QUESTION");
  expect_signature(out, k_sweep(w, tasks, "IMG_OBJ_NOREG", "QUESTION"), {3, 4}, "IMG_OBJ_NOREG->QUESTION");
  if (out.ok) out.detail = "200 tasks with 1-4 registers; partition exact; signature unchanged without registers";
  return out;
}

Outcome c11(const Context& cx) {
  Outcome out;
  const std::span<const Task> tasks = std::span(cx.tasks).first(20);
  struct Probe {
    const char* src;
    const char* dst;
    std::size_t lo, hi;  // stage layers [lo, hi]
  };
  const Probe probes[] = {{"IMG_OTH", "QUESTION", 0, 1}, {"IMG_OBJ", "QUESTION", 3, 4}, {"QUESTION", "LAST", 6, 7}};
  std::size_t sweeps = 0;
  for (std::size_t k : {1, 3, 5, 7, 9, 11, 15}) {
    for (const auto& p : probes) {
      Centers want;
      const long h = static_cast<long>(k / 2);
      for (long c = 0; c < static_cast<long>(kLayers); ++c) {
        const long a = std::max(0L, c - h), b = std::min(static_cast<long>(kLayers) - 1, c + h);
        if (a <= static_cast<long>(p.hi) && static_cast<long>(p.lo) <= b) want.insert(static_cast<std::size_t>(c));
      }
      expect_signature(out, k_sweep(cx.two_stage, tasks, p.src, p.dst, k), want,
                       fmt("k=%zu %s->%s", k, p.src, p.dst));
      ++sweeps;
    }
  }
  if (out.ok) out.detail = fmt("%zu sweeps match the interval oracle", sweeps);
  return out;
}

}  // namespace

int main() {
  Context cx;
  cx.two_stage = plant_circuit(planted_config(kLayers), FlowSchedule::two_stage());
  cx.tasks = gen_tasks({}, planted_config(kLayers), 2026, 200);

  std::vector<std::pair<int, std::function<Outcome()>>> criteria;
  Outcome c2_out;
  int failures = 0;
  auto report = [&](int id, const Outcome& o) {
    std::printf("C%d %s %s\n", id, o.ok ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.ok ? 0 : 1;
  };
  auto guarded = [&](int id, const std::function<Outcome()>& fn) {
    try {
      report(id, fn());
    } catch (const std::exception& e) {
      Outcome o;
      o.fail(std::string("exception: ") + e.what());
      report(id, o);
    }
  };

  try {
    const Outcome c1_out = c1_c2(cx, c2_out);
    report(1, c1_out);
    report(2, c2_out);
  } catch (const std::exception& e) {
    Outcome o;
    o.fail(std::string("exception: ") + e.what());
    report(1, o);
    report(2, o);
  }
  guarded(3, [&] { return c3(cx); });
  guarded(4, [&] { return c4(cx); });
  guarded(5, c5);
  guarded(6, c6);
  guarded(7, c7);
  guarded(8, c8);
  guarded(9, c9);
  guarded(10, c10);
  guarded(11, [&] { return c11(cx); });
  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
