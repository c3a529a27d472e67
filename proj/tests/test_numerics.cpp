// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "xflow/error.hpp"
#include "xflow/numerics.hpp"

using namespace xflow;
using namespace xflow::testing;

TEST_CASE("matmul: identity on the left returns the right operand") {
  const Matrix b = random_matrix(2, 5, 3);
  CHECK(matmul(Matrix::identity(2), b) == b);
}

TEST_CASE("matmul: hand arithmetic") {
  const Matrix a(2, 2, std::vector<float>{1, 2, 3, 4});
  const Matrix b(2, 1, std::vector<float>{1, 1});
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 3.0f);
  CHECK(c(1, 0) == 7.0f);
}

TEST_CASE("matmul: random 8x8 equals the triple loop bit for bit") {
  const Matrix a = random_matrix(8, 8, 11), b = random_matrix(8, 8, 12);
  const Matrix got = matmul(a, b), want = naive_matmul(a, b);
  CHECK(std::memcmp(got.data().data(), want.data().data(), got.size() * sizeof(float)) == 0);
}

TEST_CASE("matmul: every shape up to 16 matches the triple loop and respects identity") {
  const std::size_t dims[] = {1, 2, 3, 5, 8, 13, 16};
  std::uint64_t seed = 100;
  for (std::size_t m : dims)
    for (std::size_t k : dims)
      for (std::size_t n : dims) {
        const Matrix a = random_matrix(m, k, ++seed), b = random_matrix(k, n, ++seed);
        REQUIRE(matmul(a, b) == naive_matmul(a, b));
        REQUIRE(matmul(a, Matrix::identity(k)) == a);
      }
}

TEST_CASE("matmul: shape mismatch throws") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(matmul_transposed(Matrix(2, 3), Matrix(2, 4)), ShapeError);
}

TEST_CASE("matmul_transposed equals matmul with an explicit transpose") {
  const Matrix a = random_matrix(5, 7, 1), b = random_matrix(4, 7, 2);
  CHECK(matmul_transposed(a, b) == naive_matmul(a, transpose(b)));
}

TEST_CASE("masked_softmax: symmetric pair") {
  const Matrix s(1, 2, std::vector<float>{0, 0});
  const auto p = masked_softmax(s, Matrix(1, 2));
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("masked_softmax: single unmasked entry gets all the weight") {
  const Matrix s(1, 2, std::vector<float>{5, 1});
  const Matrix m(1, 2, std::vector<float>{0, kNegInf});
  const auto p = masked_softmax(s, m);
  CHECK(p(0, 0) == 1.0);
  CHECK(p(0, 1) == 0.0);
}

TEST_CASE("masked_softmax: fully masked row is all zeros") {
  const Matrix s = random_matrix(2, 3, 4);
  Matrix m(2, 3);
  for (std::size_t j = 0; j < 3; ++j) m(1, j) = kNegInf;
  const auto p = masked_softmax(s, m);
  for (std::size_t j = 0; j < 3; ++j) CHECK(p(1, j) == 0.0);
}

TEST_CASE("masked_softmax: random causal 6x6 rows sum to one by direct summation") {
  const Matrix s = random_matrix(6, 6, 21, 3.0f);
  const auto p = masked_softmax(s, causal_mask(6));
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(p(i, j) >= 0.0);
      if (j > i) CHECK(p(i, j) == 0.0);
      sum += p(i, j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("masked_softmax: matches a scalar exp/sum oracle") {
  const Matrix s = random_matrix(5, 5, 31, 2.0f);
  const Matrix m = causal_mask(5);
  const auto p = masked_softmax(s, m);
  for (std::size_t i = 0; i < 5; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j <= i; ++j) denom += std::exp(static_cast<double>(s(i, j)));
    for (std::size_t j = 0; j <= i; ++j) CHECK(std::abs(p(i, j) - std::exp(static_cast<double>(s(i, j))) / denom) <= 1e-12);
  }
}

TEST_CASE("masked_softmax property: random masks keep rows normalized and shift invariant") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(9);
    const Matrix s = random_matrix(n, n, 1000 + trial, 4.0f);
    Matrix m(n, n);
    for (auto& v : m.data()) v = rng.below(3) == 0 ? kNegInf : 0.0f;
    const auto p = masked_softmax(s, m);
    MatrixD shifted(n, n);
    const double c = rng.normal() * 10.0;
    for (std::size_t i = 0; i < s.size(); ++i) shifted.data()[i] = s.data()[i] + c;
    const auto q = masked_softmax(shifted, m);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        REQUIRE(p(i, j) >= 0.0);
        if (is_masked(m(i, j))) REQUIRE(p(i, j) == 0.0);
        any = any || !is_masked(m(i, j));
        sum += p(i, j);
        REQUIRE(std::abs(p(i, j) - q(i, j)) <= 1e-9);
      }
      REQUIRE(std::abs(sum - (any ? 1.0 : 0.0)) <= 1e-9);
    }
  }
}

TEST_CASE("softmax of a vector matches the scalar oracle") {
  const std::vector<double> x{0.5, -1.0, 2.0, 0.0, 3.5, -2.5, 1.0};
  const auto p = softmax(x);
  double denom = 0.0;
  for (double v : x) denom += std::exp(v);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(p[i] - std::exp(x[i]) / denom) <= 1e-12);
}

TEST_CASE("activation: identity, relu, silu") {
  const Matrix x(1, 3, std::vector<float>{-1, 0, 2});
  CHECK(activation(x, Activation::Identity) == x);
  const Matrix r = activation(x, Activation::Relu);
  CHECK(r(0, 0) == 0.0f);
  CHECK(r(0, 1) == 0.0f);
  CHECK(r(0, 2) == 2.0f);
  CHECK(activation(Matrix(1, 1), Activation::Silu)(0, 0) == 0.0f);
  const Matrix y = random_matrix(4, 4, 5);
  const Matrix s = activation(y, Activation::Silu);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    CHECK(std::abs(s.data()[i] - v / (1.0 + std::exp(-v))) <= 1e-6);
  }
}

TEST_CASE("activation: names parse, unknown names are config errors") {
  CHECK(parse_activation("SILU") == Activation::Silu);
  CHECK(parse_activation("relu") == Activation::Relu);
  CHECK(parse_activation("IDENTITY") == Activation::Identity);
  CHECK_THROWS_AS(parse_activation("GELU"), ConfigError);
}

TEST_CASE("rms_norm: unit, zero and scalar-loop cases") {
  const std::vector<float> ones(4, 1.0f);
  for (float v : rms_norm(ones, ones, 1e-12f)) CHECK(v == doctest::Approx(1.0f).epsilon(1e-6));
  const std::vector<float> zeros(4, 0.0f);
  for (float v : rms_norm(zeros, ones, 1e-5f)) CHECK(v == 0.0f);

  const Matrix x = random_matrix(1, 12, 9), g = random_matrix(1, 12, 10);
  const auto out = rms_norm(x.row(0), g.row(0), 1e-5f);
  double ms = 0.0;
  for (float v : x.row(0)) ms += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(ms / 12.0 + 1e-5);
  for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(out[i] - x(0, i) * g(0, i) * inv) <= 1e-6);
}

TEST_CASE("gaussian_init: deterministic, seed-separated, correct scale") {
  CHECK(gaussian_init(7, 9, 42, 0.02f) == gaussian_init(7, 9, 42, 0.02f));
  CHECK_FALSE(gaussian_init(7, 9, 1, 0.02f) == gaussian_init(7, 9, 2, 0.02f));
  const Matrix m = gaussian_init(100, 100, 5, 0.02f);
  double sum = 0.0, sq = 0.0;
  for (float v : m.data()) sum += v, sq += static_cast<double>(v) * v;
  const double n = static_cast<double>(m.size());
  const double mean = sum / n;
  const double sd = std::sqrt((sq - n * mean * mean) / (n - 1.0));
  CHECK(std::abs(sd - 0.02) <= 0.002);
  CHECK(std::abs(mean) <= 0.002);
  CHECK(all_finite(m));
}

TEST_CASE("tensor_seed gives independent streams per name") {
  CHECK(tensor_seed(1, "layers.0.wq") != tensor_seed(1, "layers.0.wk"));
  CHECK(tensor_seed(1, "layers.0.wq") != tensor_seed(2, "layers.0.wq"));
  CHECK(tensor_seed(1, "x") == tensor_seed(1, "x"));
}

TEST_CASE("matrix construction checks the data length") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<float>{1, 2, 3}), ShapeError);
}
