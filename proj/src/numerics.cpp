// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace xflow {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  // i-k-j order: each c(i, j) still accumulates over k in ascending order.
  for (std::size_t i = 0; i < m; ++i) {
    float* ci = c.row(i).data();
    const float* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const float av = ai[p];
      const float* bp = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: inner dimensions " + std::to_string(a.cols()) +
                     " and " + std::to_string(b.cols()) + " differ");
  }
  return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

MatrixD masked_softmax(const MatrixD& scores, const Matrix& mask) {
  if (scores.rows() != mask.rows() || scores.cols() != mask.cols()) {
    throw ShapeError("masked_softmax: scores and mask shapes differ");
  }
  MatrixD out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto s = scores.row(i);
    const auto m = mask.row(i);
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!is_masked(m[j])) row_max = std::max(row_max, s[j] + static_cast<double>(m[j]));
    }
    if (row_max == -std::numeric_limits<double>::infinity()) continue;  // fully masked
    auto o = out.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (is_masked(m[j])) continue;
      o[j] = std::exp(s[j] + static_cast<double>(m[j]) - row_max);
      sum += o[j];
    }
    for (std::size_t j = 0; j < s.size(); ++j) o[j] /= sum;
  }
  return out;
}

MatrixD masked_softmax(const Matrix& scores, const Matrix& mask) {
  MatrixD wide(scores.rows(), scores.cols());
  std::copy(scores.data().begin(), scores.data().end(), wide.data().begin());
  return masked_softmax(wide, mask);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

Activation parse_activation(std::string_view name) {
  if (name == "IDENTITY" || name == "identity") return Activation::Identity;
  if (name == "RELU" || name == "relu") return Activation::Relu;
  if (name == "SILU" || name == "silu") return Activation::Silu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::Identity: return "IDENTITY";
    case Activation::Relu: return "RELU";
    case Activation::Silu: return "SILU";
  }
  throw ConfigError("unknown activation id " + std::to_string(static_cast<int>(kind)));
}

Matrix activation(const Matrix& x, Activation kind) {
  Matrix y = x;
  switch (kind) {
    case Activation::Identity:
      return y;
    case Activation::Relu:
      for (auto& v : y.data()) v = v > 0.0f ? v : 0.0f;
      return y;
    case Activation::Silu:
      for (auto& v : y.data()) v = v / (1.0f + std::exp(-v));
      return y;
  }
  throw ConfigError("unknown activation id " + std::to_string(static_cast<int>(kind)));
}

std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps) {
  if (x.size() != gain.size()) throw ShapeError("rms_norm: gain length differs from input");
  if (!(eps > 0.0f)) throw ConfigError("rms_norm: eps must be positive");
  double sq = 0.0;
  for (float v : x) sq += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(sq / static_cast<double>(x.size()) + eps);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * inv * gain[i]);
  return out;
}

double SplitMix64::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t tensor_seed(std::uint64_t seed, std::string_view name) {
  // FNV-1a over the name, mixed into the seed through one SplitMix step.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return SplitMix64(seed ^ h).next();
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, std::uint64_t seed, float scale) {
  if (!(scale > 0.0f)) throw ConfigError("gaussian_init: scale must be positive");
  SplitMix64 rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = static_cast<float>(rng.normal() * scale);
  return m;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace xflow
