// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and brute-force oracles for the test suites.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xflow/circuits.hpp"
#include "xflow/intervention.hpp"
#include "xflow/model.hpp"
#include "xflow/numerics.hpp"

namespace xflow::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, float scale = 1.0f) {
  return gaussian_init(rows, cols, seed, scale);
}

// Textbook triple loop, float accumulation over k in ascending order.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

inline Matrix causal_mask(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t s = q + 1; s < n; ++s) m(q, s) = kNegInf;
  return m;
}

inline TransformerConfig small_config(std::size_t layers = 2, std::size_t d = 16, std::size_t heads = 4,
                                      std::size_t kv = 4, std::size_t vocab = 11) {
  TransformerConfig c;
  c.n_layers = layers;
  c.d_model = d;
  c.d_ff = 2 * d;
  c.n_heads = heads;
  c.n_kv_heads = kv;
  c.vocab_size = vocab;
  c.activation = Activation::Silu;
  return c;
}

// The circuit configuration used throughout: d=64, H=4, 8 attributes.
inline TransformerConfig planted_config(std::size_t layers = 10) {
  TransformerConfig c;
  c.n_layers = layers;
  c.d_model = 64;
  c.d_ff = 16;
  c.n_heads = 4;
  c.n_kv_heads = 4;
  c.vocab_size = 96;
  c.activation = Activation::Identity;
  return c;
}

// Whole-set interventions over every layer: attention knockouts (k = 1 and 3),
// module knockouts and prunes. Partial target sets are left out on purpose;
// the oracle only speaks for interventions on whole sets.
inline std::vector<InterventionPlan> oracle_grid(std::size_t n_layers) {
  const char* sources[] = {"IMAGE", "IMG_OBJ", "IMG_OTH", "QUESTION", "LAST", "TRUE_OPTION", "ALL", "NONE"};
  const char* targets[] = {"QUESTION", "LAST", "IMAGE", "ALL", "NONE"};
  std::vector<InterventionPlan> plans;
  for (std::size_t k : {1, 3})
    for (std::size_t c = 0; c < n_layers; ++c) {
      const auto layers = window_layers(c, k, n_layers, WindowMode::Centered);
      for (const char* s : sources)
        for (const char* t : targets) {
          InterventionPlan p;
          p.knockouts.push_back({s, t, layers});
          plans.push_back(std::move(p));
        }
      for (ModuleKind m : {ModuleKind::Mhat, ModuleKind::Ffn})
        for (const char* t : targets) {
          InterventionPlan p;
          p.module_knockouts.push_back({m, t, layers});
          plans.push_back(std::move(p));
        }
    }
  for (std::size_t x = 0; x <= n_layers; ++x)
    for (const char* s : {"IMAGE", "IMG_OBJ", "IMG_OTH", "QUESTION"}) {
      InterventionPlan p;
      p.prune = PruneSpec{x, s};
      plans.push_back(std::move(p));
    }
  return plans;
}

// Collapse: p_c <= -90%. Intact: |p_c| <= 1%.
inline bool matches_effect(Effect e, double pc) {
  return e == Effect::Collapse ? pc <= -90.0 : std::abs(pc) <= 1.0;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

}  // namespace xflow::testing
