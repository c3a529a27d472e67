// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/circuits.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "xflow/error.hpp"

namespace xflow {
namespace {

// Key scores: a source match lands at 40, the text sink at 20, anything else
// at 0, so source attention is within e^-20 of one-hot.
constexpr float kSourceKey = 20.0f;
constexpr float kSinkKey = 10.0f;
constexpr float kNoiseScale = 0.05f;

// Each hop pays kHopPayment at its targets; one unpaid hop leaves
// kHopPayment * kDefaultGain = 48 on the DEFAULT logit, double the intact
// answer logit.
constexpr float kHopPayment = 0.5f;
constexpr float kDefaultGain = 96.0f;
constexpr float kAnswerGain = 24.0f;
constexpr float kRelatedGain = 12.0f;
constexpr float kRelatedStep = 0.25f;

constexpr float kRegisterNormMin = 60.0f;
constexpr float kRegisterNormSpan = 20.0f;

std::size_t stage_order(StageKind k) { return static_cast<std::size_t>(k); }

bool contains_sorted(const std::vector<std::size_t>& v, std::size_t x) {
  return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::Broad: return "BROAD";
    case StageKind::Targeted: return "TARGETED";
    case StageKind::Readout: return "READOUT";
    case StageKind::CapFix: return "CAPFIX";
  }
  return "?";
}

StageKind parse_stage_kind(std::string_view name) {
  if (name == "BROAD") return StageKind::Broad;
  if (name == "TARGETED") return StageKind::Targeted;
  if (name == "READOUT") return StageKind::Readout;
  if (name == "CAPFIX") return StageKind::CapFix;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(Effect e) { return e == Effect::Collapse ? "COLLAPSE" : "INTACT"; }

std::string_view Stage::source() const {
  switch (kind) {
    case StageKind::Broad: return sets::kImgOth;
    case StageKind::Targeted: return sets::kImgObj;
    case StageKind::Readout: return sets::kQuestion;
    case StageKind::CapFix: return sets::kLast;
  }
  return sets::kNone;
}

std::string_view Stage::target() const {
  return kind == StageKind::Broad || kind == StageKind::Targeted ? sets::kQuestion : sets::kLast;
}

void FlowSchedule::validate(std::size_t n_layers) const {
  std::vector<bool> used(n_layers, false);
  std::vector<bool> seen(4, false);
  std::size_t prev_order = 0;
  std::size_t prev_max = 0;
  bool have_prev = false;
  for (const auto& st : stages) {
    const std::string name(to_string(st.kind));
    if (st.layers.empty()) throw ConfigError("stage " + name + " has no layers");
    if (seen[stage_order(st.kind)]) throw ConfigError("stage " + name + " appears twice");
    seen[stage_order(st.kind)] = true;
    if (st.through_ffn && st.kind != StageKind::Targeted) {
      throw ConfigError("only TARGETED can route through the FFN");
    }
    for (std::size_t i = 0; i < st.layers.size(); ++i) {
      const std::size_t l = st.layers[i];
      if (l >= n_layers) {
        throw ConfigError("stage " + name + " layer " + std::to_string(l) + " >= L=" + std::to_string(n_layers));
      }
      if (i > 0 && l <= st.layers[i - 1]) throw ConfigError("stage " + name + " layers must be increasing");
      if (used[l]) throw ConfigError("layer " + std::to_string(l) + " belongs to two stages");
      used[l] = true;
    }
    if (have_prev && (stage_order(st.kind) < prev_order || st.layers.front() <= prev_max)) {
      throw ConfigError("stages must run in BROAD, TARGETED, READOUT, CAPFIX order");
    }
    prev_order = stage_order(st.kind);
    prev_max = st.layers.back();
    have_prev = true;
  }
}

const Stage* FlowSchedule::find(StageKind kind) const {
  for (const auto& st : stages)
    if (st.kind == kind) return &st;
  return nullptr;
}

std::vector<std::size_t> FlowSchedule::layers_of(StageKind kind) const {
  const Stage* st = find(kind);
  return st ? st->layers : std::vector<std::size_t>{};
}

FlowSchedule FlowSchedule::two_stage() {
  return {{{StageKind::Broad, {0, 1}, false},
           {StageKind::Targeted, {3, 4}, false},
           {StageKind::Readout, {6, 7}, false}}};
}

CircuitDims CircuitDims::make(std::size_t n_attributes) {
  CircuitDims d;
  const std::size_t a = n_attributes;
  d.n_attributes = a;
  d.payload = 0;
  d.tag_image = a;
  d.tag_text = a + 1;
  d.tag_question = a + 2;
  d.tag_last = a + 3;
  d.tag_background = a + 4;
  d.tag_object = a + 5;
  d.tag_register = a + 6;
  d.accum = a + 7;
  d.staging = d.accum + a;
  d.lower = d.staging + a;
  d.cap = d.lower + a;
  d.debt = d.cap + a;
  d.paid = d.debt + 1;
  d.used = d.paid + 1;
  return d;
}

void check_circuit_config(const TransformerConfig& config, const CircuitParams& params) {
  config.validate();
  const std::size_t a = params.n_attributes;
  if (a < 2) throw ConfigError("planted circuits need at least 2 attributes");
  const auto dims = CircuitDims::make(a);
  if (config.d_model < dims.used) {
    throw ConfigError("d_model=" + std::to_string(config.d_model) + " is below the " +
                      std::to_string(dims.used) + " dims the circuit layout needs");
  }
  if (config.head_dim() < a + 2) {
    throw ConfigError("head_dim=" + std::to_string(config.head_dim()) + " is below the " +
                      std::to_string(a + 2) + " value dims a stage head needs");
  }
  if (config.d_ff < a + 1) {
    throw ConfigError("d_ff=" + std::to_string(config.d_ff) + " is below " + std::to_string(a + 1));
  }
  if (config.vocab_size < CircuitVocab::required_size(a)) {
    throw ConfigError("vocab_size=" + std::to_string(config.vocab_size) + " is below " +
                      std::to_string(CircuitVocab::required_size(a)));
  }
  if (config.activation != Activation::Identity) throw ConfigError("planted circuits need IDENTITY activation");
  if (config.use_norm) throw ConfigError("planted circuits need use_norm = false");
}

ModelWeights plant_circuit(const TransformerConfig& config, const FlowSchedule& schedule,
                           const CircuitParams& params) {
  check_circuit_config(config, params);
  schedule.validate(config.n_layers);
  const auto dm = CircuitDims::make(params.n_attributes);
  const std::size_t a_n = params.n_attributes;
  const std::size_t pay = a_n;       // value coord of the hop payment
  const std::size_t flag = a_n + 1;  // value coord of the READOUT own payment
  const float q_scale = 2.0f * std::sqrt(static_cast<float>(config.head_dim()));

  ModelWeights w = zero_weights(config);

  const auto n_of = [&](StageKind k) { return schedule.layers_of(k).size(); };
  const Stage* targeted = schedule.find(StageKind::Targeted);
  const std::size_t q_hops =
      n_of(StageKind::Broad) + n_of(StageKind::Targeted) * (targeted && targeted->through_ffn ? 2 : 1);
  const std::size_t n_read = n_of(StageKind::Readout);
  const float debt = kHopPayment * static_cast<float>(n_read * (q_hops + 1));

  // Embeddings: every word is a question token; the prompt token sits at LAST
  // and carries the debt.
  for (std::size_t v = 0; v < config.vocab_size; ++v) {
    w.token_embedding(v, dm.tag_text) = 1.0f;
    w.token_embedding(v, dm.tag_question) = 1.0f;
  }
  w.token_embedding(CircuitVocab::kPrompt, dm.tag_question) = 0.0f;
  w.token_embedding(CircuitVocab::kPrompt, dm.tag_last) = 1.0f;
  w.token_embedding(CircuitVocab::kPrompt, dm.debt) = debt;

  for (std::size_t a = 0; a < a_n; ++a) {
    w.unembedding(CircuitVocab::lower(a), dm.lower + a) = kAnswerGain;
    w.unembedding(CircuitVocab::cap(a), dm.cap + a) = kAnswerGain;
    for (std::size_t i = 0; i < CircuitVocab::kRelatedPerAttr; ++i) {
      w.unembedding(CircuitVocab::related(a, i), dm.lower + a) = kRelatedGain - kRelatedStep * static_cast<float>(i);
    }
  }
  w.unembedding(CircuitVocab::kDefault, dm.debt) = kDefaultGain;

  for (const auto& st : schedule.stages) {
    const float share = 1.0f / static_cast<float>(st.layers.size());
    for (std::size_t l : st.layers) {
      auto& L = w.layers[l];
      switch (st.kind) {
        case StageKind::Broad:
        case StageKind::Targeted: {
          const bool broad = st.kind == StageKind::Broad;
          const std::size_t src_tag = broad ? dm.tag_background : dm.tag_object;
          L.wq(dm.tag_question, 0) = q_scale;
          L.wk(src_tag, 0) = kSourceKey;
          L.wk(dm.tag_text, 0) = kSinkKey;
          for (std::size_t a = 0; a < a_n; ++a) L.wv(dm.payload + a, a) = 1.0f;
          L.wv(src_tag, pay) = 1.0f;
          const std::size_t dest = broad ? dm.accum : (st.through_ffn ? dm.staging : dm.accum);
          for (std::size_t a = 0; a < a_n; ++a) L.wo(a, dest + a) = broad ? -share : share;
          L.wo(pay, dm.paid) = -kHopPayment;
          if (st.through_ffn) {
            for (std::size_t a = 0; a < a_n; ++a) {
              L.ffn_in(a, dm.staging + a) = 1.0f;
              L.ffn_out(dm.accum + a, a) = 1.0f;
              L.ffn_out(dm.staging + a, a) = -1.0f;
            }
            L.ffn_in(a_n, dm.tag_question) = 1.0f;
            L.ffn_out(dm.paid, a_n) = -kHopPayment;
          }
          break;
        }
        case StageKind::Readout:
          L.wq(dm.tag_text, 0) = q_scale;
          L.wk(dm.tag_question, 0) = kSourceKey;
          L.wk(dm.tag_text, 0) = kSinkKey;
          for (std::size_t a = 0; a < a_n; ++a) {
            L.wv(dm.accum + a, a) = 1.0f;
            L.wo(a, dm.lower + a) = share;
          }
          L.wv(dm.paid, pay) = 1.0f;
          L.wv(dm.tag_question, flag) = 1.0f;
          L.wo(pay, dm.debt) = 1.0f;
          L.wo(flag, dm.debt) = -kHopPayment;
          break;
        case StageKind::CapFix:
          for (std::size_t a = 0; a < a_n; ++a) {
            L.ffn_in(a, dm.lower + a) = 1.0f;
            L.ffn_out(dm.lower + a, a) = -1.0f;
            L.ffn_out(dm.cap + a, a) = 1.0f;
          }
          break;
      }
    }
  }
  return w;
}

Task gen_task(const TaskGenParams& params, const TransformerConfig& config, std::uint64_t seed) {
  const std::size_t a_n = params.circuit.n_attributes;
  const auto dm = CircuitDims::make(a_n);
  if (a_n < 2) throw UsageError("task generation needs at least 2 attributes");
  if (config.d_model < dm.used) throw UsageError("d_model too small for the circuit layout");
  if (config.vocab_size < CircuitVocab::required_size(a_n)) throw UsageError("vocabulary too small for the attribute words");
  if (params.n_patches == 0) throw UsageError("tasks need at least one patch");
  if (params.n_registers > 4) throw UsageError("at most 4 register patches");

  SplitMix64 rng(seed ^ 0x7A5C0FFEE1234567ull);
  std::size_t begin = 0, end = 0;
  if (params.object_begin || params.object_end) {
    begin = params.object_begin.value_or(0);
    end = params.object_end.value_or(params.n_patches);
    if (begin >= end || end > params.n_patches) {
      throw UsageError("object span [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") is outside the " + std::to_string(params.n_patches) + " patches");
    }
  } else {
    const std::size_t len = std::clamp<std::size_t>(params.object_length, 1, params.n_patches);
    begin = rng.below(params.n_patches - len + 1);
    end = begin + len;
  }

  std::vector<std::size_t> obj, oth;
  for (std::size_t p = 0; p < params.n_patches; ++p) (p >= begin && p < end ? obj : oth).push_back(p);
  if (params.n_registers > oth.size()) throw UsageError("not enough background patches for the registers");

  const std::size_t answer = rng.below(a_n);
  const std::size_t distractor = (answer + 1 + rng.below(a_n - 1)) % a_n;

  std::vector<std::size_t> regs;
  {
    std::vector<std::size_t> pool = oth;
    for (std::size_t i = 0; i < params.n_registers; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      regs.push_back(pool[i]);
    }
    std::sort(regs.begin(), regs.end());
  }

  Matrix patches(params.n_patches, config.d_model);
  for (std::size_t p = 0; p < params.n_patches; ++p) {
    for (std::size_t c = dm.used; c < config.d_model; ++c) {
      patches(p, c) = kNoiseScale * static_cast<float>(rng.normal());
    }
    patches(p, dm.tag_image) = 1.0f;
    if (contains_sorted(regs, p)) {
      patches(p, dm.tag_register) = kRegisterNormMin + kRegisterNormSpan * static_cast<float>(rng.uniform());
    } else if (p >= begin && p < end) {
      patches(p, dm.payload + answer) = 1.0f;
      patches(p, dm.tag_object) = 1.0f;
    } else {
      patches(p, dm.payload + distractor) = 1.0f;
      patches(p, dm.tag_background) = 1.0f;
    }
  }

  std::vector<std::uint32_t> tokens;
  for (std::size_t i = 0; i < params.n_filler; ++i) {
    tokens.push_back(CircuitVocab::kFillerBegin + static_cast<std::uint32_t>(rng.below(CircuitVocab::kFillerCount)));
  }
  const bool answer_first = rng.below(2) == 0;
  const std::size_t opt0 = params.n_patches + tokens.size();
  const std::size_t true_pos = answer_first ? opt0 : opt0 + 1;
  const std::size_t false_pos = answer_first ? opt0 + 1 : opt0;
  tokens.push_back(CircuitVocab::lower(answer_first ? answer : distractor));
  tokens.push_back(CircuitVocab::lower(answer_first ? distractor : answer));
  tokens.push_back(CircuitVocab::kPrompt);

  Task t;
  t.patch_features = std::move(patches);
  t.token_ids = tokens;
  t.answer_id = CircuitVocab::lower(answer);
  t.answer_cap_id = CircuitVocab::cap(answer);
  t.false_option_id = CircuitVocab::lower(distractor);
  t.answer_subwords = {params.score_capitalized ? t.answer_cap_id : t.answer_id};
  t.layout = SequenceLayout(params.n_patches, tokens.size());
  std::vector<std::size_t> question;
  for (std::size_t p = params.n_patches; p + 1 < t.layout.size(); ++p) question.push_back(p);
  t.layout.set(sets::kQuestion, std::move(question));
  t.layout.set(sets::kTrueOption, {true_pos});
  t.layout.set(sets::kFalseOption, {false_pos});
  t.layout.set(sets::kImgObj, obj);
  t.layout.set(sets::kImgOth, oth);
  t.layout.set(sets::kRegister, regs);
  t.layout.validate();
  return t;
}

std::vector<Task> gen_tasks(const TaskGenParams& params, const TransformerConfig& config,
                            std::uint64_t seed, std::size_t count) {
  SplitMix64 seeds(seed);
  std::vector<Task> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen_task(params, config, seeds.next()));
  return out;
}

std::vector<std::size_t> effective_source(const Stage& stage, const SequenceLayout& layout) {
  const auto& src = layout.at(stage.source());
  if (stage.kind == StageKind::Broad && layout.contains(sets::kRegister)) {
    return set_difference(src, layout.at(sets::kRegister));
  }
  return src;
}

FlowGraph FlowGraph::build(const FlowSchedule& schedule, std::size_t n_layers) {
  schedule.validate(n_layers);
  std::vector<FlowHop> hops;
  for (const auto& st : schedule.stages) {
    const bool ffn_only = st.kind == StageKind::CapFix;
    for (std::size_t l : st.layers) {
      if (!ffn_only) {
        hops.push_back({st.kind, l, ModuleKind::Mhat, std::string(st.source()), std::string(st.target())});
      }
      if (ffn_only || st.through_ffn) {
        hops.push_back({st.kind, l, ModuleKind::Ffn, std::string(st.target()), std::string(st.target())});
      }
    }
  }
  std::stable_sort(hops.begin(), hops.end(), [](const FlowHop& x, const FlowHop& y) {
    if (x.layer != y.layer) return x.layer < y.layer;
    return x.module == ModuleKind::Mhat && y.module == ModuleKind::Ffn;
  });

  FlowGraph g;
  g.nodes.push_back({std::string(sets::kImage), 0});
  for (const auto& h : hops) {
    const std::size_t from = g.nodes.size() - 1;
    g.nodes.push_back({h.target, h.layer + 1});
    g.edges.push_back({from, g.nodes.size() - 1, h});
  }
  const FlowNode& tail = g.nodes.back();
  if (!hops.empty() && tail.set == sets::kLast) {
    if (tail.layer == n_layers) {
      g.output = g.nodes.size() - 1;
      return g;
    }
    g.nodes.push_back({std::string(sets::kLast), n_layers});
    g.edges.push_back({g.nodes.size() - 2, g.nodes.size() - 1, std::nullopt});
  } else {
    g.nodes.push_back({std::string(sets::kLast), n_layers});
  }
  g.output = g.nodes.size() - 1;
  return g;
}

bool FlowGraph::reaches_output(const std::vector<bool>& removed) const {
  std::vector<bool> seen(nodes.size(), false);
  std::deque<std::size_t> frontier{0};
  seen[0] = true;
  while (!frontier.empty()) {
    const std::size_t n = frontier.front();
    frontier.pop_front();
    if (n == output) return true;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges[e].from != n || (e < removed.size() && removed[e]) || seen[edges[e].to]) continue;
      seen[edges[e].to] = true;
      frontier.push_back(edges[e].to);
    }
  }
  return false;
}

Effect oracle_effect(const FlowSchedule& schedule, std::size_t n_layers, const SequenceLayout& layout,
                     const InterventionPlan& plan) {
  plan.validate(layout, n_layers);
  const FlowGraph g = FlowGraph::build(schedule, n_layers);

  std::vector<bool> removed(g.edges.size(), false);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!g.edges[e].hop) continue;
    const FlowHop& hop = *g.edges[e].hop;
    const std::size_t l = hop.layer;

    std::vector<std::size_t> pruned;
    if (plan.prune && l >= plan.prune->start_layer) pruned = layout.at(plan.prune->pruned_set);
    const auto targets = set_difference(layout.at(hop.target), pruned);

    std::vector<std::size_t> sources;
    if (hop.module == ModuleKind::Mhat) {
      sources = set_difference(effective_source(*schedule.find(hop.stage), layout), pruned);
    }

    bool all_cut = true;
    for (std::size_t t : targets) {
      bool zeroed = false;
      for (const auto& mk : plan.module_knockouts) {
        if (mk.module == hop.module && mk.active_at(l) && contains_sorted(layout.at(mk.positions), t)) zeroed = true;
      }
      if (zeroed) continue;
      if (hop.module == ModuleKind::Ffn) {
        all_cut = false;
        break;
      }
      bool readable = false;
      for (std::size_t s : sources) {
        if (s > t) continue;
        bool blocked = false;
        for (const auto& k : plan.knockouts) {
          if (k.active_at(l) && contains_sorted(layout.at(k.target), t) && contains_sorted(layout.at(k.source), s)) {
            blocked = true;
            break;
          }
        }
        if (!blocked) {
          readable = true;
          break;
        }
      }
      if (readable) {
        all_cut = false;
        break;
      }
    }
    removed[e] = all_cut;
  }
  return g.reaches_output(removed) ? Effect::Intact : Effect::Collapse;
}

VerifyReport verify_circuit(const ModelWeights& weights, const FlowSchedule& schedule,
                            std::span<const Task> tasks) {
  VerifyReport r;
  r.n_tasks = tasks.size();
  r.min_answer_prob = tasks.empty() ? 0.0 : 1.0;
  std::size_t correct = 0;
  const ForwardOptions opts{TraceDetail::Full, AttentionPath::Auto};

  for (const auto& task : tasks) {
    const auto in = prepare_scoring(task, weights, MeasurePosition::FirstSubword);
    const auto trace = forward(weights, in.embeddings, in.layout, {}, opts);
    const auto best = std::max_element(trace.output.begin(), trace.output.end()) - trace.output.begin();
    if (static_cast<std::uint32_t>(best) == in.scored_id) ++correct;
    r.min_answer_prob = std::min(r.min_answer_prob, trace.output[in.scored_id]);

    for (const auto& st : schedule.stages) {
      if (st.kind == StageKind::CapFix) continue;
      const auto src = effective_source(st, in.layout);
      const auto& tgt = in.layout.at(st.target());
      for (std::size_t l : st.layers) {
        const MatrixD& att = trace.attention[l][0];
        for (std::size_t t : tgt) {
          double off = 0.0;
          for (std::size_t s = 0; s <= t; ++s) {
            if (!contains_sorted(src, s)) off += att(t, s);
          }
          r.max_off_target = std::max(r.max_off_target, off);
        }
      }
    }

    for (std::size_t l = 0; l < weights.config.n_layers; ++l) {
      const auto& h0 = trace.hidden[l];
      const auto& h1 = trace.hidden[l + 1];
      for (std::size_t i = 0; i < h0.size(); ++i) {
        const double expect = static_cast<double>(h0.data()[i]) + trace.attn_out[l].data()[i] +
                              trace.ffn_out[l].data()[i];
        r.max_residual_error = std::max(r.max_residual_error, std::abs(h1.data()[i] - expect));
      }
    }
  }

  r.accuracy = tasks.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(tasks.size());
  r.accuracy_ok = !tasks.empty() && correct == tasks.size();
  r.attention_ok = r.max_off_target < kMaxOffTargetAttention;
  r.residual_ok = r.max_residual_error <= kResidualTolerance;
  return r;
}

}  // namespace xflow
