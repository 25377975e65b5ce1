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
#include "sortq/sorting.hpp"

namespace sortq {
namespace {

constexpr std::size_t kSamples = 20;
constexpr std::size_t kSeqLen = 24;

std::vector<Matrix> random_inputs(std::size_t n, std::size_t t, std::size_t d, std::mt19937_64& rng) {
  std::vector<Matrix> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(oracle::random_matrix(t, d, rng));
  return xs;
}

template <typename Fwd>
std::vector<CalibrationCapture> capture_all(const std::vector<Matrix>& xs, Fwd fwd) {
  std::vector<CalibrationCapture> caps;
  for (const auto& x : xs) caps.push_back(fwd(x).capture);
  return caps;
}

Matrix averaged_gram(const std::vector<Matrix>& xs) {
  Matrix c(xs.front().cols(), xs.front().cols());
  for (const auto& x : xs) {
    const Matrix g = oracle::mul(oracle::transposed(x), x);
    for (std::size_t i = 0; i < c.rows(); ++i)
      for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) += g(i, j) / static_cast<double>(xs.size());
  }
  return c;
}

TEST(SortMlp, PreservesOutputAndOrdersByLeverage) {
  std::mt19937_64 rng(21);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_mlp_weights(spec, rng);
  const auto xs = random_inputs(kSamples, kSeqLen, spec.d_hidden, rng);
  const auto caps = capture_all(xs, [&](const Matrix& x) { return mlp_forward(x, w, true); });
  const auto sorted = sort_mlp(w, caps);
  for (const auto& x : xs) EXPECT_LT(oracle::rel(mlp_forward(x, sorted.weights).y, mlp_forward(x, w).y), 1e-12);

  std::vector<Matrix> inter;
  for (const auto& c : caps) inter.push_back(c.mlp_intermediate);
  const auto scores = oracle::ridge_leverage(averaged_gram(inter), 1.0);
  EXPECT_EQ(sorted.record.indices, oracle::argsort_desc(scores));
  EXPECT_EQ(sorted.record.kind, SortKind::permute_mlp);
}

TEST(SortMlp, UsesOneRidgeSolveAndNoInversions) {
  std::mt19937_64 rng(22);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_mlp_weights(spec, rng);
  const auto caps = capture_all(random_inputs(4, kSeqLen, spec.d_hidden, rng),
                                [&](const Matrix& x) { return mlp_forward(x, w, true); });
  reset_op_counters();
  (void)sort_mlp(w, caps);
  EXPECT_EQ(op_counters().ridge_solves, 1u);
  EXPECT_EQ(op_counters().inversions, 0u);
}

class AttnSortTest : public ::testing::TestWithParam<AttnMode> {};

TEST_P(AttnSortTest, FullSortPreservesOutput) {
  std::mt19937_64 rng(23);
  BlockSpec spec = toy_block_spec();
  if (GetParam() == AttnMode::mhsa) spec.n_kv_heads = spec.n_heads;
  const auto w = random_attn_weights(spec, rng);
  const auto xs = random_inputs(kSamples, kSeqLen, spec.d_hidden, rng);
  const auto caps = capture_all(xs, [&](const Matrix& x) { return attn_forward(x, spec, w, {}, true); });
  const auto qk = sort_qk(w, spec, caps, GetParam());
  const auto vo = sort_vo(qk.weights, spec, caps, GetParam());
  for (const auto& x : xs) {
    EXPECT_LT(oracle::rel(attn_forward(x, spec, vo.weights, qk.rope_gather).y, attn_forward(x, spec, w).y), 1e-9);
  }
  // Every q/k record is the symmetric lift of its RoPE gather.
  for (std::size_t kv = 0; kv < spec.n_kv_heads; ++kv) {
    EXPECT_EQ(qk.records[kv].indices, symmetric_index(qk.rope_gather[kv]));
    EXPECT_TRUE(is_permutation(qk.rope_gather[kv], spec.d_head / 2));
  }
  for (const auto& s : vo.spectrum.per_head)
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i - 1], s[i]);
}

INSTANTIATE_TEST_SUITE_P(Modes, AttnSortTest, ::testing::Values(AttnMode::mhsa, AttnMode::gqa));

TEST(SortQk, PairScoresAreDescendingAfterSort) {
  std::mt19937_64 rng(24);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_attn_weights(spec, rng);
  const auto xs = random_inputs(6, kSeqLen, spec.d_hidden, rng);
  const auto caps = capture_all(xs, [&](const Matrix& x) { return attn_forward(x, spec, w, {}, true); });
  const auto qk = sort_qk(w, spec, caps, AttnMode::gqa);
  const auto caps2 = capture_all(xs, [&](const Matrix& x) {
    return attn_forward(x, spec, qk.weights, qk.rope_gather, true);
  });
  const std::size_t half = spec.d_head / 2;
  for (std::size_t kv = 0; kv < spec.n_kv_heads; ++kv) {
    const auto s = qk_group_scores(spec, caps2, kv);
    for (std::size_t j = 1; j < half; ++j) EXPECT_GE(s[j - 1] + s[j - 1 + half], s[j] + s[j + half] - 1e-9);
  }
}

TEST(SortVo, MhsaFactorsReconstructAndTruncateOptimally) {
  std::mt19937_64 rng(25);
  BlockSpec spec = toy_block_spec();
  spec.n_kv_heads = spec.n_heads;
  const auto w = random_attn_weights(spec, rng);
  const auto xs = random_inputs(kSamples, kSeqLen, spec.d_hidden, rng);
  const auto caps = capture_all(xs, [&](const Matrix& x) { return attn_forward(x, spec, w, {}, true); });
  const auto vo = sort_vo(w, spec, caps, AttnMode::mhsa);
  const Matrix c_half = oracle::sqrt_psd(averaged_gram(xs));
  const std::size_t d = spec.d_head;
  for (std::size_t h = 0; h < spec.n_heads; ++h) {
    const Matrix wv = column_block(w.w_v, h * d, d), wo = row_block(w.w_o, h * d, d);
    const Matrix nv = column_block(vo.weights.w_v, h * d, d), no = row_block(vo.weights.w_o, h * d, d);
    const Matrix product = oracle::mul(wv, wo);
    EXPECT_LE(oracle::rel(oracle::mul(nv, no), product), 1e-5);

    const Matrix target = oracle::mul(c_half, product);
    const auto sv = oracle::singular_values(target);
    for (std::size_t k = 1; k <= d; ++k) {
      const Matrix approx = oracle::mul(c_half, oracle::mul(column_block(nv, 0, k), row_block(no, 0, k)));
      double tail = 0;
      for (std::size_t i = k; i < sv.size(); ++i) tail += sv[i] * sv[i];
      EXPECT_NEAR(oracle::fro_diff(approx, target), std::sqrt(tail), 1e-6 * oracle::fro(target)) << "head " << h;
    }
  }
}

TEST(SortVo, RejectsMhsaModeOnGroupedHeads) {
  std::mt19937_64 rng(26);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_attn_weights(spec, rng);
  const auto caps = capture_all(random_inputs(2, 8, spec.d_hidden, rng),
                                [&](const Matrix& x) { return attn_forward(x, spec, w, {}, true); });
  EXPECT_THROW(sort_vo(w, spec, caps, AttnMode::mhsa), ShapeError);
  EXPECT_THROW(sort_vo(w, spec, {}, AttnMode::gqa), CalibrationError);
}

TEST(SortMamba, BcAndZxoPreserveOutput) {
  std::mt19937_64 rng(27);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_mamba_weights(spec, rng);
  const auto xs = random_inputs(kSamples, kSeqLen, spec.d_hidden, rng);
  const auto caps = capture_all(xs, [&](const Matrix& x) { return mamba_forward(x, spec, w, true); });
  const auto bc = sort_bc(w, spec, caps);
  const auto zxo = sort_zxo(bc.weights, spec, caps);
  ASSERT_EQ(bc.records.size(), spec.n_ssm_groups);
  ASSERT_EQ(zxo.records.size(), spec.n_ssm_heads);
  for (const auto& x : xs) {
    EXPECT_LT(oracle::rel(mamba_forward(x, spec, bc.weights).y, mamba_forward(x, spec, w).y), 1e-10);
    EXPECT_LT(oracle::rel(mamba_forward(x, spec, zxo.weights).y, mamba_forward(x, spec, w).y), 1e-10);
  }
}

TEST(SortMamba, ScoresAreDescendingAfterSort) {
  std::mt19937_64 rng(28);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_mamba_weights(spec, rng);
  const auto xs = random_inputs(6, kSeqLen, spec.d_hidden, rng);
  const auto caps = capture_all(xs, [&](const Matrix& x) { return mamba_forward(x, spec, w, true); });
  const auto zxo = sort_zxo(sort_bc(w, spec, caps).weights, spec, caps);
  const auto after = capture_all(xs, [&](const Matrix& x) { return mamba_forward(x, spec, zxo.weights, true); });
  for (std::size_t g = 0; g < spec.n_ssm_groups; ++g) {
    const auto s = bc_group_scores(spec, after, g);
    for (std::size_t j = 1; j < s.size(); ++j) EXPECT_GE(s[j - 1], s[j] - 1e-9);
  }
  for (std::size_t h = 0; h < spec.n_ssm_heads; ++h) {
    std::vector<Matrix> states;
    for (const auto& c : after) states.push_back(c.ssm_states[h]);
    const auto s = oracle::ridge_leverage(averaged_gram(states), 1.0);
    for (std::size_t j = 1; j < s.size(); ++j) EXPECT_GE(s[j - 1], s[j] - 1e-9);
  }
}

TEST(SortMamba, BcScoreMatchesNormProductDefinition) {
  std::mt19937_64 rng(29);
  const BlockSpec spec = toy_block_spec();
  const auto w = random_mamba_weights(spec, rng);
  const auto caps = capture_all(random_inputs(5, kSeqLen, spec.d_hidden, rng),
                                [&](const Matrix& x) { return mamba_forward(x, spec, w, true); });
  const std::size_t n = spec.d_state, per = spec.ssm_heads_per_group();
  for (std::size_t g = 0; g < spec.n_ssm_groups; ++g) {
    std::vector<Matrix> cs;
    for (const auto& c : caps) cs.push_back(column_block(c.ssm_c, g * n, n));
    const Matrix cc = averaged_gram(cs);
    std::vector<double> want(n, 0.0);
    for (std::size_t h = g * per; h < (g + 1) * per; ++h) {
      std::vector<Matrix> bs;
      for (const auto& c : caps) {
        Matrix b = column_block(c.ssm_b, g * n, n);
        for (std::size_t t = 0; t < b.rows(); ++t)
          for (std::size_t j = 0; j < n; ++j) b(t, j) *= c.delta(t, h);
        bs.push_back(b);
      }
      const Matrix cb = averaged_gram(bs);
      // ||C^1/2 e_j|| = sqrt(C_jj).
      for (std::size_t j = 0; j < n; ++j) want[j] += std::sqrt(cb(j, j)) * std::sqrt(cc(j, j));
    }
    const auto got = bc_group_scores(spec, caps, g);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(got[j], want[j], 1e-9 * (1 + want[j]));
  }
}

TEST(Permutation, BlockHelpersMoveExactlyOneBlock) {
  const Matrix m = Matrix::from_rows({{0, 1, 2, 3}, {4, 5, 6, 7}});
  const IndexVector idx = {1, 0};
  EXPECT_EQ(permute_column_block(m, 2, idx), Matrix::from_rows({{0, 1, 3, 2}, {4, 5, 7, 6}}));
  EXPECT_EQ(permute_row_block(m, 0, idx), Matrix::from_rows({{4, 5, 6, 7}, {0, 1, 2, 3}}));
  EXPECT_EQ(symmetric_index(IndexVector{1, 0}), (IndexVector{1, 0, 3, 2}));
}

TEST(SortKindNames, RoundTrip) {
  for (auto k : {SortKind::permute_mlp, SortKind::permute_qk_symmetric, SortKind::qsvd_vo, SortKind::permute_bc,
                 SortKind::permute_zxo})
    EXPECT_EQ(sort_kind_from_string(to_string(k)), k);
  EXPECT_THROW(sort_kind_from_string("nope"), FormatError);
}

}  // namespace
}  // namespace sortq
