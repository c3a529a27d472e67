// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xflow/intervention.hpp"
#include "xflow/layout.hpp"
#include "xflow/numerics.hpp"

namespace xflow {

struct TransformerConfig {
  std::size_t n_layers = 0;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t n_heads = 1;
  std::size_t n_kv_heads = 1;
  std::size_t vocab_size = 0;
  Activation activation = Activation::Identity;
  bool use_norm = false;
  float norm_eps = 1e-5f;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t kv_dim() const { return n_kv_heads * head_dim(); }

  /// Throws ConfigError when head counts do not divide evenly or a size is 0.
  void validate() const;

  bool operator==(const TransformerConfig&) const = default;
};

/// One decoder layer. Row-vector convention: Q = H·wq. The FFN keeps the
/// column-vector orientation f = W_U σ(W_B x), so ffn_in is W_B (d_ff×d) and
/// ffn_out is W_U (d×d_ff).
struct LayerWeights {
  Matrix wq;       // d × d
  Matrix wk;       // d × (n_kv_heads·head_dim)
  Matrix wv;       // d × (n_kv_heads·head_dim)
  Matrix wo;       // d × d; rows [j·hd, (j+1)·hd) belong to head j
  Matrix ffn_in;   // d_ff × d
  Matrix ffn_out;  // d × d_ff
  std::vector<float> attn_norm;  // d, only with use_norm
  std::vector<float> ffn_norm;   // d, only with use_norm

  bool operator==(const LayerWeights&) const = default;
};

struct ModelWeights {
  TransformerConfig config;
  Matrix token_embedding;  // vocab × d
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;  // d, only with use_norm
  Matrix unembedding;             // vocab × d

  /// Throws ShapeError / ConfigError on inconsistent tensors or non-finite values.
  void validate() const;

  bool operator==(const ModelWeights&) const = default;
};

/// All-zero weights (unit norm gains) with the right shapes.
ModelWeights zero_weights(const TransformerConfig& config);

/// Gaussian weights, one SplitMix stream per tensor name.
ModelWeights random_weights(const TransformerConfig& config, std::uint64_t seed, float scale);

struct AssembledInput {
  Matrix embeddings;  // N × d
  SequenceLayout layout;
};

/// Rows 0..N_V-1 are the patch features, the rest are embedding rows of
/// `token_ids`. The layout has IMAGE and LAST populated.
AssembledInput assemble_input(const Matrix& patch_features, std::span<const std::uint32_t> token_ids,
                              const ModelWeights& weights);

/// Which attention kernel evaluates the heads. Grouped handles any
/// n_kv_heads; MultiHead is the plain per-head path and requires
/// n_kv_heads == n_heads.
enum class AttentionPath { Auto, Grouped, MultiHead };

struct AttentionOutput {
  Matrix out;                          // N × d
  std::vector<MatrixD> head_weights;   // per head N × N, when requested
};

AttentionOutput mhat_forward(const Matrix& h_prev, const LayerWeights& layer,
                             const TransformerConfig& config, const Matrix& mask,
                             bool keep_weights = false, AttentionPath path = AttentionPath::Auto);

/// f = W_U σ(W_B x), row by row.
Matrix ffn_forward(const Matrix& x, const LayerWeights& layer, Activation act);

enum class TraceDetail {
  Final,   // output distribution and final hidden state only
  Hidden,  // plus every H^ℓ, a^ℓ and f^ℓ
  Full,    // plus per-head attention weights
};

struct ForwardOptions {
  TraceDetail detail = TraceDetail::Final;
  AttentionPath attention = AttentionPath::Auto;
};

struct ForwardTrace {
  // H^0..H^L, N × d each. Rows of pruned positions stay frozen at their last
  // computed value. Only the last entry is kept at TraceDetail::Final.
  std::vector<Matrix> hidden;
  std::vector<Matrix> attn_out;  // a^1..a^L (index ℓ-1), N × d
  std::vector<Matrix> ffn_out;   // f^1..f^L
  // attention[ℓ][j] is |alive[ℓ]| × |alive[ℓ]| for layer index ℓ.
  std::vector<std::vector<MatrixD>> attention;
  std::vector<std::vector<std::size_t>> alive;  // surviving positions per layer index
  std::vector<double> output;                   // P_N over the vocabulary

  const Matrix& final_hidden() const { return hidden.back(); }
};

/// Runs the decoder over `input` with every intervention in `plan` applied.
ForwardTrace forward(const ModelWeights& weights, const Matrix& input, const SequenceLayout& layout,
                     const InterventionPlan& plan, const ForwardOptions& options = {});

/// softmax(E·h) in double precision. Applies the final norm when the config
/// enables norms.
std::vector<double> unembed(std::span<const float> h, const ModelWeights& weights);

/// Raw E·h logits (after the final norm when enabled).
std::vector<double> unembed_logits(std::span<const float> h, const ModelWeights& weights);

/// softmax(E·h) for an explicit unembedding matrix.
std::vector<double> unembed(std::span<const float> h, const Matrix& unembedding);

}  // namespace xflow
