/*
 * Copyright 2026 The sortq Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sortq/errors.hpp"
#include "sortq/quantizer.hpp"

namespace sortq {
namespace {

double half_round(double v) { return from_half_bits(to_half_bits(v)); }

// Element-by-element RTN written from the definition.
Matrix naive_rtn(const Matrix& w, unsigned bits, std::size_t gs) {
  const double qmax = (1 << (bits - 1)) - 1;
  const double qmin = -(1 << (bits - 1));
  Matrix out(w.rows(), w.cols());
  for (std::size_t c = 0; c < w.cols(); ++c)
    for (std::size_t g0 = 0; g0 < w.rows(); g0 += gs) {
      const std::size_t g1 = std::min(w.rows(), g0 + gs);
      double m = 0;
      for (std::size_t r = g0; r < g1; ++r) m = std::max(m, std::fabs(w(r, c)));
      const double s = half_round(m / qmax);
      for (std::size_t r = g0; r < g1; ++r) {
        const double q = s == 0 ? 0 : std::clamp(std::nearbyint(w(r, c) / s), qmin, qmax);
        out(r, c) = q * s;
      }
    }
  return out;
}

TEST(RoundToNearest, ErrorBoundedByHalfStep) {
  std::mt19937_64 rng(41);
  std::size_t groups = 0;
  for (unsigned bits : {2u, 3u, 4u, 8u}) {
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t gs = 8 + 8 * (trial % 4);
      const Matrix w = oracle::random_matrix(gs * 2 + 3, 5, rng, 0.1 + trial);
      const auto q = quantize_group_sym(w, bits, gs);
      const Matrix deq = q.dequantize();
      for (std::size_t c = 0; c < w.cols(); ++c)
        for (std::size_t g = 0; g < q.n_groups(); ++g, ++groups) {
          const double s = q.scale(c, g);
          for (std::size_t r = g * gs; r < std::min(w.rows(), (g + 1) * gs); ++r)
            EXPECT_LE(std::fabs(w(r, c) - deq(r, c)), s / 2 + 1e-7);
        }
    }
  }
  EXPECT_GE(groups, 1000u);
}

TEST(RoundToNearest, MatchesNaiveDefinition) {
  std::mt19937_64 rng(42);
  for (unsigned bits = 2; bits <= 8; ++bits) {
    const Matrix w = oracle::random_matrix(70, 6, rng);
    for (std::size_t gs : {1u, 16u, 32u, 128u}) {
      const Matrix got = quantize_group_sym(w, bits, gs).dequantize();
      EXPECT_EQ(max_abs_diff(got, naive_rtn(w, bits, gs)), 0.0) << bits << "/" << gs;
    }
  }
}

TEST(RoundToNearest, ZeroGroupsAndRangeErrors) {
  Matrix w(8, 2);
  w(0, 1) = 3.0;
  const auto q = quantize_group_sym(w, 4, 4);
  EXPECT_EQ(q.scale(0, 0), 0.0);
  EXPECT_NEAR(q.dequantize()(0, 1), 3.0, q.scale(1, 0) / 2);
  EXPECT_THROW(quantize_group_sym(w, 1, 4), RangeError);
  EXPECT_THROW(quantize_group_sym(w, 9, 4), RangeError);
  EXPECT_THROW(quantize_group_sym(w, 4, 0), RangeError);
  EXPECT_THROW(quantize_group_sym(Matrix(), 4, 4), EmptyTensorError);
  const std::vector<double> short_scale = {1.0};
  EXPECT_THROW(quantize_group_sym(w, 4, 4, short_scale), ShapeError);
}

TEST(RoundToNearest, SingularValueScaleFusion) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.01, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix f = oracle::random_matrix(64, 12, rng);
    std::vector<double> sigma(f.cols());
    for (double& s : sigma) s = u(rng);
    const Matrix fused = quantize_group_sym(f, 4, 32, sigma).dequantize();
    const Matrix want = scale_columns(quantize_group_sym(f, 4, 32).dequantize(), sigma);
    EXPECT_LE(oracle::rel(fused, want), 1e-3);
    // Codes are those of the unscaled factor.
    EXPECT_EQ(quantize_group_sym(f, 4, 32, sigma).packed, quantize_group_sym(f, 4, 32).packed);
  }
}

TEST(Gptq, IdentityCorrelationReproducesRtn) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 16 + 8 * (trial % 5);
    const Matrix w = oracle::random_matrix(n, 7, rng);
    Matrix eye(n, n);
    for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
    const auto g = gptq_compensate(w, eye, 4, 16);
    EXPECT_EQ(g.tensor, quantize_group_sym(w, 4, 16));
  }
}

TEST(Gptq, BeatsRtnOnAverage) {
  std::mt19937_64 rng(45);
  double gptq_sum = 0, rtn_sum = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 32;
    const Matrix w = oracle::random_matrix(n, 16, rng);
    // Correlated inputs: a low-dimensional signal plus noise.
    const Matrix mix = oracle::random_matrix(6, n, rng);
    Matrix x = oracle::mul(oracle::random_matrix(200, 6, rng), mix);
    x = add(x, oracle::random_matrix(200, n, rng, 0.1));
    Matrix c = oracle::mul(oracle::transposed(x), x);
    c = scaled(c, 1.0 / 200);
    const auto g = gptq_compensate(w, c, 4, 16);
    const double rtn = weighted_error(w, quantize_group_sym(w, 4, 16).dequantize(), c);
    EXPECT_NEAR(g.objective, weighted_error(w, g.tensor.dequantize(), c), 1e-9 * (1 + g.objective));
    gptq_sum += g.objective;
    rtn_sum += rtn;
  }
  EXPECT_LE(gptq_sum / 100, rtn_sum / 100);
}

TEST(Gptq, DeadInputsAndErrors) {
  std::mt19937_64 rng(46);
  const Matrix w = oracle::random_matrix(8, 3, rng);
  Matrix c = oracle::random_psd(8, 40, rng);
  for (std::size_t j = 0; j < 8; ++j) c(2, j) = c(j, 2) = 0.0;
  const auto g = gptq_compensate(w, c, 4, 4);
  for (std::size_t col = 0; col < 3; ++col) EXPECT_EQ(g.tensor.dequantize()(2, col), 0.0);
  EXPECT_TRUE(std::isfinite(g.objective));
  EXPECT_THROW(gptq_compensate(w, Matrix(7, 7), 4, 4), ShapeError);
  EXPECT_THROW(gptq_compensate(w, c, 4, 4, 0.0), NumericalError);
}

TEST(Gptq, SingularValueScale) {
  std::mt19937_64 rng(47);
  const Matrix f = oracle::random_matrix(32, 5, rng);
  const Matrix c = oracle::random_psd(32, 100, rng);
  const std::vector<double> sigma = {5, 4, 3, 2, 1};
  const auto g = gptq_compensate(f, c, 4, 16, kDefaultGptqDamp, sigma);
  EXPECT_LE(oracle::rel(g.tensor.dequantize(), scale_columns(f, sigma)), 0.2);
  EXPECT_NEAR(g.objective, weighted_error(scale_columns(f, sigma), g.tensor.dequantize(), c), 1e-9 * g.objective);
}

}  // namespace
}  // namespace sortq
