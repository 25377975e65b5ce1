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
#include "sortq/linalg.hpp"

namespace sortq {
namespace {

TEST(RidgeLeverage, MatchesExplicitInverseOnRandomPsd) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    // Alternate full-rank and rank-deficient samples.
    const std::size_t t = trial % 2 == 0 ? 64 : 12;
    const Matrix c = oracle::random_psd(32, t, rng);
    const double lambda = trial % 3 == 0 ? 0.1 : 1.0;
    const auto got = ridge_leverage(c, lambda);
    const auto want = oracle::ridge_leverage(c, lambda);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-8) << "trial " << trial;
  }
}

TEST(RidgeLeverage, IdentityGivesClosedForm) {
  const auto s = ridge_leverage(Matrix::identity(5), 1.0);
  for (double v : s) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(RidgeLeverage, ScoresLieInUnitInterval) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = ridge_leverage(oracle::random_psd(16, 8, rng), 0.5);
    for (double v : s) {
      EXPECT_GE(v, -1e-12);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(RidgeLeverage, RejectsBadInputs) {
  EXPECT_THROW(ridge_leverage(Matrix::identity(3), 0.0), NumericalError);
  EXPECT_THROW(ridge_leverage(Matrix::identity(3), -1.0), NumericalError);
  Matrix indefinite = Matrix::identity(3);
  indefinite(1, 1) = -1.0;
  EXPECT_THROW(ridge_leverage(indefinite, 1.0), NumericalError);
}

TEST(SymmetricEigen, ReconstructsAndSortsAscending) {
  std::mt19937_64 rng(5);
  const Matrix c = oracle::random_psd(10, 20, rng);
  const auto e = symmetric_eigen(c);
  for (std::size_t i = 1; i < e.values.size(); ++i) EXPECT_LE(e.values[i - 1], e.values[i]);
  Matrix rebuilt(10, 10);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      for (std::size_t k = 0; k < 10; ++k) rebuilt(i, j) += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
  EXPECT_LT(oracle::rel(rebuilt, c), 1e-12);
}

TEST(PsdFunctions, SqrtMatchesJacobiOracle) {
  std::mt19937_64 rng(7);
  const Matrix c = oracle::random_psd(12, 40, rng);
  EXPECT_LT(oracle::rel(sqrt_psd(c), oracle::sqrt_psd(c)), 1e-10);
}

TEST(PsdFunctions, InverseSqrtWhitens) {
  std::mt19937_64 rng(8);
  const Matrix c = oracle::random_psd(12, 40, rng);
  const Matrix w = inv_sqrt_psd(c);
  EXPECT_LT(oracle::rel(oracle::mul(oracle::mul(w, c), w), Matrix::identity(12)), 1e-9);
}

TEST(PsdFunctions, SolveMatchesGaussJordan) {
  std::mt19937_64 rng(9);
  const Matrix c = oracle::random_psd(8, 30, rng);
  const Matrix b = oracle::random_matrix(8, 3, rng);
  EXPECT_LT(oracle::rel(solve_psd(c, b), oracle::mul(oracle::inverse(c), b)), 1e-9);
}

TEST(PsdFunctions, RootColumnNormsAreSqrtDiagonal) {
  std::mt19937_64 rng(10);
  const Matrix c = oracle::random_psd(9, 5, rng);
  const auto n = root_column_norms(c);
  for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(n[j], std::sqrt(c(j, j)), 1e-10);
}

TEST(Svd, ThinFactorsReconstruct) {
  std::mt19937_64 rng(12);
  for (auto [m, n] : {std::pair<std::size_t, std::size_t>{7, 4}, {4, 7}, {6, 6}}) {
    const Matrix a = oracle::random_matrix(m, n, rng);
    const auto s = svd(a);
    ASSERT_EQ(s.sigma.size(), std::min(m, n));
    for (std::size_t i = 1; i < s.sigma.size(); ++i) EXPECT_GE(s.sigma[i - 1], s.sigma[i]);
    EXPECT_LT(oracle::rel(oracle::mul(scale_columns(s.u, s.sigma), s.vt), a), 1e-12);
    const auto want = oracle::singular_values(a);
    for (std::size_t i = 0; i < s.sigma.size(); ++i) EXPECT_NEAR(s.sigma[i], want[i], 1e-9);
  }
}

TEST(Cholesky, FactorsAndInverts) {
  std::mt19937_64 rng(13);
  const Matrix a = oracle::random_psd(10, 30, rng);
  const auto l = cholesky_lower(a);
  ASSERT_TRUE(l.has_value());
  EXPECT_LT(oracle::rel(oracle::mul(*l, oracle::transposed(*l)), a), 1e-12);
  EXPECT_LT(oracle::rel(spd_inverse_from_cholesky(*l), oracle::inverse(a)), 1e-9);
}

TEST(Cholesky, RejectsIndefinite) {
  Matrix a = Matrix::identity(3);
  a(2, 2) = -0.5;
  EXPECT_FALSE(cholesky_lower(a).has_value());
  EXPECT_FALSE(cholesky_lower(Matrix(3, 3)).has_value());
}

TEST(Argsort, MatchesSelectionSortIncludingTies) {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + trial % 40);
    for (double& v : s) v = small(rng);
    EXPECT_EQ(argsort_desc(s), oracle::argsort_desc(s));
  }
}

TEST(Permutations, InverseComposesToIdentity) {
  std::mt19937_64 rng(15);
  IndexVector p(20);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  ASSERT_TRUE(is_permutation(p, 20));
  const auto inv = inverse_permutation(p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(inv[p[i]], i);
  EXPECT_FALSE(is_permutation(IndexVector{0, 0, 1}, 3));
  EXPECT_FALSE(is_permutation(IndexVector{0, 1}, 3));
}

TEST(CorrelationStats, AveragesGramMatrices) {
  CorrelationStats stats(2);
  EXPECT_THROW((void)stats.finalize(), CalibrationError);
  stats.accumulate(Matrix::from_rows({{1, 0}, {0, 2}}));
  stats.accumulate(Matrix::from_rows({{3, 1}}));
  const Matrix c = stats.finalize();
  EXPECT_EQ(stats.samples_seen(), 2u);
  EXPECT_DOUBLE_EQ(c(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(c(0, 1), 1.5);
  EXPECT_DOUBLE_EQ(c(1, 1), 2.5);
  EXPECT_THROW(stats.accumulate(Matrix(1, 3)), ShapeError);
}

TEST(OpCounters, CountInversions) {
  reset_op_counters();
  (void)ridge_leverage(Matrix::identity(4), 1.0);
  EXPECT_EQ(op_counters().ridge_solves, 1u);
  EXPECT_EQ(op_counters().inversions, 0u);
  (void)inv_sqrt_psd(Matrix::identity(4));
  EXPECT_EQ(op_counters().inversions, 1u);
  EXPECT_EQ(op_counters().max_inverted_dim, 4u);
}

}  // namespace
}  // namespace sortq
