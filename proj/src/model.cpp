// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xflow/error.hpp"

namespace xflow {

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(name + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (!all_finite(m)) throw ConfigError(name + " contains non-finite values");
}

void expect_len(const std::vector<float>& v, std::size_t n, const std::string& name) {
  if (v.size() != n) {
    throw ShapeError(name + " has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(n));
  }
}

Matrix norm_rows(const Matrix& x, const std::vector<float>& gain, float eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto y = rms_norm(x.row(r), gain, eps);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

// Per-head outputs concatenated along columns (N × d), grouped-query layout.
Matrix grouped_heads(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& mask,
                     const TransformerConfig& cfg, std::vector<MatrixD>* weights) {
  const std::size_t n = q.rows();
  const std::size_t hd = cfg.head_dim();
  const double scale = std::sqrt(static_cast<double>(hd));
  Matrix concat(n, cfg.d_model);
  MatrixD scores(n, n);
  for (std::size_t j = 0; j < cfg.n_heads; ++j) {
    const std::size_t g = j * cfg.n_kv_heads / cfg.n_heads;
    const std::size_t qo = j * hd, ko = g * hd;
    for (std::size_t r = 0; r < n; ++r) {
      const float* qr = q.row(r).data() + qo;
      for (std::size_t s = 0; s < n; ++s) {
        if (is_masked(mask(r, s))) {
          scores(r, s) = 0.0;
          continue;
        }
        const float* ks = k.row(s).data() + ko;
        float dot = 0.0f;
        for (std::size_t c = 0; c < hd; ++c) dot += qr[c] * ks[c];
        scores(r, s) = static_cast<double>(dot) / scale;
      }
    }
    MatrixD probs = masked_softmax(scores, mask);
    for (std::size_t r = 0; r < n; ++r) {
      float* out = concat.row(r).data() + qo;
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          if (is_masked(mask(r, s))) continue;
          acc += probs(r, s) * static_cast<double>(v(s, ko + c));
        }
        out[c] = static_cast<float>(acc);
      }
    }
    if (weights) weights->push_back(std::move(probs));
  }
  return concat;
}

Matrix column_slice(const Matrix& m, std::size_t offset, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = m(r, offset + c);
  return out;
}

// Plain multi-head attention: every head owns its K/V slice.
Matrix multihead_heads(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& mask,
                       const TransformerConfig& cfg, std::vector<MatrixD>* weights) {
  const std::size_t n = q.rows();
  const std::size_t hd = cfg.head_dim();
  const double scale = std::sqrt(static_cast<double>(hd));
  Matrix concat(n, cfg.d_model);
  for (std::size_t j = 0; j < cfg.n_heads; ++j) {
    const Matrix qj = column_slice(q, j * hd, hd);
    const Matrix kj = column_slice(k, j * hd, hd);
    const Matrix vj = column_slice(v, j * hd, hd);
    const Matrix raw = matmul_transposed(qj, kj);
    MatrixD scores(n, n);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      scores.data()[i] = static_cast<double>(raw.data()[i]) / scale;
    }
    MatrixD probs = masked_softmax(scores, mask);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          if (probs(r, s) != 0.0) acc += probs(r, s) * static_cast<double>(vj(s, c));
        }
        concat(r, j * hd + c) = static_cast<float>(acc);
      }
    }
    if (weights) weights->push_back(std::move(probs));
  }
  return concat;
}

}  // namespace

void TransformerConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || d_ff == 0 || n_heads == 0 || n_kv_heads == 0 ||
      vocab_size == 0) {
    throw ConfigError("transformer config sizes must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (n_heads % n_kv_heads != 0) {
    throw ConfigError("n_heads " + std::to_string(n_heads) + " not divisible by n_kv_heads " +
                      std::to_string(n_kv_heads));
  }
  if (use_norm && !(norm_eps > 0.0f)) throw ConfigError("norm_eps must be positive");
}

void ModelWeights::validate() const {
  config.validate();
  const auto& c = config;
  expect_shape(token_embedding, c.vocab_size, c.d_model, "token_embedding");
  expect_shape(unembedding, c.vocab_size, c.d_model, "unembedding");
  if (layers.size() != c.n_layers) {
    throw ShapeError("model has " + std::to_string(layers.size()) + " layers, config says " +
                     std::to_string(c.n_layers));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    expect_shape(w.wq, c.d_model, c.d_model, p + "wq");
    expect_shape(w.wk, c.d_model, c.kv_dim(), p + "wk");
    expect_shape(w.wv, c.d_model, c.kv_dim(), p + "wv");
    expect_shape(w.wo, c.d_model, c.d_model, p + "wo");
    expect_shape(w.ffn_in, c.d_ff, c.d_model, p + "ffn_in");
    expect_shape(w.ffn_out, c.d_model, c.d_ff, p + "ffn_out");
    if (c.use_norm) {
      expect_len(w.attn_norm, c.d_model, p + "attn_norm");
      expect_len(w.ffn_norm, c.d_model, p + "ffn_norm");
    }
  }
  if (c.use_norm) expect_len(final_norm, c.d_model, "final_norm");
}

ModelWeights zero_weights(const TransformerConfig& config) {
  config.validate();
  ModelWeights w;
  w.config = config;
  const std::size_t d = config.d_model;
  w.token_embedding = Matrix(config.vocab_size, d);
  w.unembedding = Matrix(config.vocab_size, d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    LayerWeights lw;
    lw.wq = Matrix(d, d);
    lw.wk = Matrix(d, config.kv_dim());
    lw.wv = Matrix(d, config.kv_dim());
    lw.wo = Matrix(d, d);
    lw.ffn_in = Matrix(config.d_ff, d);
    lw.ffn_out = Matrix(d, config.d_ff);
    if (config.use_norm) {
      lw.attn_norm.assign(d, 1.0f);
      lw.ffn_norm.assign(d, 1.0f);
    }
    w.layers.push_back(std::move(lw));
  }
  if (config.use_norm) w.final_norm.assign(d, 1.0f);
  return w;
}

ModelWeights random_weights(const TransformerConfig& config, std::uint64_t seed, float scale) {
  ModelWeights w = zero_weights(config);
  auto init = [&](Matrix& m, const std::string& name) {
    m = gaussian_init(m.rows(), m.cols(), tensor_seed(seed, name), scale);
  };
  init(w.token_embedding, "token_embedding");
  init(w.unembedding, "unembedding");
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& lw = w.layers[l];
    init(lw.wq, p + "wq");
    init(lw.wk, p + "wk");
    init(lw.wv, p + "wv");
    init(lw.wo, p + "wo");
    init(lw.ffn_in, p + "ffn_in");
    init(lw.ffn_out, p + "ffn_out");
  }
  return w;
}

AssembledInput assemble_input(const Matrix& patch_features, std::span<const std::uint32_t> token_ids,
                              const ModelWeights& weights) {
  const std::size_t d = weights.config.d_model;
  if (token_ids.empty()) throw InputError("token id list is empty");
  if (patch_features.rows() > 0 && patch_features.cols() != d) {
    throw ShapeError("patch features have width " + std::to_string(patch_features.cols()) +
                     ", model width is " + std::to_string(d));
  }
  const std::size_t nv = patch_features.rows();
  AssembledInput in{Matrix(nv + token_ids.size(), d), SequenceLayout(nv, token_ids.size())};
  for (std::size_t r = 0; r < nv; ++r) {
    std::copy(patch_features.row(r).begin(), patch_features.row(r).end(), in.embeddings.row(r).begin());
  }
  for (std::size_t t = 0; t < token_ids.size(); ++t) {
    const auto id = token_ids[t];
    if (id >= weights.config.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(weights.config.vocab_size));
    }
    auto src = weights.token_embedding.row(id);
    std::copy(src.begin(), src.end(), in.embeddings.row(nv + t).begin());
  }
  return in;
}

AttentionOutput mhat_forward(const Matrix& h_prev, const LayerWeights& layer,
                             const TransformerConfig& config, const Matrix& mask, bool keep_weights,
                             AttentionPath path) {
  if (h_prev.cols() != config.d_model) throw ShapeError("mhat_forward: input width mismatch");
  if (mask.rows() != h_prev.rows() || mask.cols() != h_prev.rows()) {
    throw ShapeError("mhat_forward: mask is not N×N");
  }
  const Matrix q = matmul(h_prev, layer.wq);
  const Matrix k = matmul(h_prev, layer.wk);
  const Matrix v = matmul(h_prev, layer.wv);

  AttentionOutput out;
  std::vector<MatrixD>* weights = keep_weights ? &out.head_weights : nullptr;
  if (path == AttentionPath::Auto) {
    path = config.n_kv_heads == config.n_heads ? AttentionPath::MultiHead : AttentionPath::Grouped;
  }
  Matrix heads;
  if (path == AttentionPath::MultiHead) {
    if (config.n_kv_heads != config.n_heads) {
      throw ConfigError("multi-head attention path needs n_kv_heads == n_heads");
    }
    heads = multihead_heads(q, k, v, mask, config, weights);
  } else {
    heads = grouped_heads(q, k, v, mask, config, weights);
  }
  out.out = matmul(heads, layer.wo);
  return out;
}

Matrix ffn_forward(const Matrix& x, const LayerWeights& layer, Activation act) {
  const Matrix inner = activation(matmul_transposed(x, layer.ffn_in), act);
  return matmul_transposed(inner, layer.ffn_out);
}

ForwardTrace forward(const ModelWeights& weights, const Matrix& input, const SequenceLayout& layout,
                     const InterventionPlan& plan, const ForwardOptions& options) {
  const auto& cfg = weights.config;
  if (input.rows() != layout.size()) {
    throw ShapeError("input has " + std::to_string(input.rows()) + " rows, layout has " +
                     std::to_string(layout.size()) + " positions");
  }
  if (input.cols() != cfg.d_model) throw ShapeError("input width differs from d_model");
  plan.validate(layout, cfg.n_layers);

  const bool keep_hidden = options.detail != TraceDetail::Final;
  const bool keep_attn = options.detail == TraceDetail::Full;

  ForwardTrace trace;
  Matrix h = input;
  if (keep_hidden) trace.hidden.push_back(h);

  std::vector<std::size_t> alive(layout.size());
  std::iota(alive.begin(), alive.end(), 0);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    if (plan.prune && plan.prune->start_layer == l) alive = surviving_positions(layout, *plan.prune);
    const bool reduced = alive.size() != layout.size();
    const auto& lw = weights.layers[l];

    const Matrix h_sub = reduced ? gather_rows(h, alive) : h;
    const Matrix mask = build_attention_mask(layout, l, plan.knockouts, alive);
    const Matrix attn_in = cfg.use_norm ? norm_rows(h_sub, lw.attn_norm, cfg.norm_eps) : h_sub;
    AttentionOutput att = mhat_forward(attn_in, lw, cfg, mask, keep_attn, options.attention);

    Matrix a = std::move(att.out);
    for (const auto& mk : plan.module_knockouts) {
      if (mk.module == ModuleKind::Mhat) a = apply_module_knockout(a, mk, l, layout, alive);
    }
    const Matrix mid = add(h_sub, a);
    const Matrix ffn_in = cfg.use_norm ? norm_rows(mid, lw.ffn_norm, cfg.norm_eps) : mid;
    Matrix f = ffn_forward(ffn_in, lw, cfg.activation);
    for (const auto& mk : plan.module_knockouts) {
      if (mk.module == ModuleKind::Ffn) f = apply_module_knockout(f, mk, l, layout, alive);
    }
    const Matrix h_new = add(mid, f);

    if (reduced) {
      for (std::size_t r = 0; r < alive.size(); ++r) {
        std::copy(h_new.row(r).begin(), h_new.row(r).end(), h.row(alive[r]).begin());
      }
    } else {
      h = h_new;
    }

    if (keep_hidden) {
      trace.hidden.push_back(h);
      if (reduced) {
        Matrix a_full(layout.size(), cfg.d_model), f_full(layout.size(), cfg.d_model);
        for (std::size_t r = 0; r < alive.size(); ++r) {
          std::copy(a.row(r).begin(), a.row(r).end(), a_full.row(alive[r]).begin());
          std::copy(f.row(r).begin(), f.row(r).end(), f_full.row(alive[r]).begin());
        }
        trace.attn_out.push_back(std::move(a_full));
        trace.ffn_out.push_back(std::move(f_full));
      } else {
        trace.attn_out.push_back(std::move(a));
        trace.ffn_out.push_back(std::move(f));
      }
    }
    if (keep_attn) trace.attention.push_back(std::move(att.head_weights));
    trace.alive.push_back(alive);
  }
  if (!keep_hidden) trace.hidden.push_back(std::move(h));
  trace.output = unembed(trace.final_hidden().row(layout.last()), weights);
  return trace;
}

std::vector<double> unembed_logits(std::span<const float> h, const ModelWeights& weights) {
  const auto& e = weights.unembedding;
  if (h.size() != e.cols()) throw ShapeError("unembed: hidden width differs from unembedding");
  std::vector<float> normed;
  if (weights.config.use_norm) {
    normed = rms_norm(h, weights.final_norm, weights.config.norm_eps);
    h = normed;
  }
  std::vector<double> logits(e.rows());
  for (std::size_t w = 0; w < e.rows(); ++w) {
    double acc = 0.0;
    const auto row = e.row(w);
    for (std::size_t k = 0; k < h.size(); ++k) acc += static_cast<double>(row[k]) * h[k];
    logits[w] = acc;
  }
  return logits;
}

std::vector<double> unembed(std::span<const float> h, const ModelWeights& weights) {
  return softmax(unembed_logits(h, weights));
}

std::vector<double> unembed(std::span<const float> h, const Matrix& unembedding) {
  if (h.size() != unembedding.cols()) throw ShapeError("unembed: hidden width mismatch");
  std::vector<double> logits(unembedding.rows());
  for (std::size_t w = 0; w < unembedding.rows(); ++w) {
    double acc = 0.0;
    const auto row = unembedding.row(w);
    for (std::size_t k = 0; k < h.size(); ++k) acc += static_cast<double>(row[k]) * h[k];
    logits[w] = acc;
  }
  return softmax(logits);
}

}  // namespace xflow
