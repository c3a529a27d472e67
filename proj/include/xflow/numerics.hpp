// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xflow/error.hpp"

namespace xflow {

// Additive mask sentinel. Entries equal to this value are treated as severed
// edges: they receive exactly zero attention weight.
inline constexpr float kNegInf = std::numeric_limits<float>::lowest();

inline bool is_masked(float mask_value) { return mask_value <= kNegInf * 0.5f; }

/// Dense row-major matrix.
template <class T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

/// a × b with sequential accumulation over the inner dimension.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a × bᵀ. Same accumulation order as matmul(a, transpose(b)).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Row-wise softmax over unmasked entries. Masked entries come out as exact
/// zeros; a row with every entry masked comes out as all zeros. Computed in
/// double precision.
MatrixD masked_softmax(const MatrixD& scores, const Matrix& mask);
MatrixD masked_softmax(const Matrix& scores, const Matrix& mask);

/// Plain softmax of a logit vector, in double precision.
std::vector<double> softmax(std::span<const double> logits);

enum class Activation { Identity, Relu, Silu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);

Matrix activation(const Matrix& x, Activation kind);

/// x · gain / sqrt(mean(x²) + eps)
std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps);

// SplitMix64 stream. Seeds every random tensor in the project so that output
// bytes do not depend on the standard library's distribution implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in (0, 1].
  double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

  // Standard normal via Box-Muller; one value per call.
  double normal();

  std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next() % bound; }

 private:
  std::uint64_t state_;
};

/// Stream seed for a named tensor: independent streams per name under one seed.
std::uint64_t tensor_seed(std::uint64_t seed, std::string_view name);

/// rows×cols matrix of N(0, scale²) samples drawn from SplitMix64(seed).
Matrix gaussian_init(std::size_t rows, std::size_t cols, std::uint64_t seed, float scale);

bool all_finite(const Matrix& m);

}  // namespace xflow
