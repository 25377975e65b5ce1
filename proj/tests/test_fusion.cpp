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

#include "oracles.hpp"
#include "sortq/errors.hpp"
#include "sortq/fusion.hpp"

namespace sortq {
namespace {

TEST(Hadamard, Orthonormal) {
  for (std::size_t n : {1u, 2u, 4u, 16u, 64u}) {
    const Matrix h = hadamard_matrix(n);
    const Matrix hth = oracle::mul(oracle::transposed(h), h);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_NEAR(hth(i, j), i == j ? 1.0 : 0.0, 1e-14);
        EXPECT_NEAR(std::fabs(h(i, j)), 1.0 / std::sqrt(static_cast<double>(n)), 1e-15);
      }
  }
  EXPECT_THROW(hadamard_matrix(0), UnsupportedError);
  EXPECT_THROW(hadamard_matrix(12), UnsupportedError);
}

TEST(FusionConfig, ValidationRules) {
  EXPECT_NO_THROW(FusionConfig::hadamard_all().validate());
  EXPECT_NO_THROW(FusionConfig::none().validate());
  EXPECT_TRUE(FusionConfig::hadamard_all().rotates_residual());
  EXPECT_FALSE(FusionConfig::none().rotates_residual());

  auto bad_out = FusionConfig::hadamard_all();
  bad_out.ops["up_proj"].output = true;
  EXPECT_THROW(bad_out.validate(), UnsupportedError);
  auto bad_in = FusionConfig::hadamard_all();
  bad_in.ops["o_proj"].input = true;
  EXPECT_THROW(bad_in.validate(), UnsupportedError);
  auto mixed = FusionConfig::hadamard_all();
  mixed.ops["k_proj"].input = false;
  EXPECT_THROW(mixed.validate(), UnsupportedError);
  auto unknown = FusionConfig::none();
  unknown.ops["wq"] = {};
  EXPECT_THROW(unknown.validate(), FormatError);
}

class FusedModel : public ::testing::TestWithParam<const char*> {};

TEST_P(FusedModel, LogitsMatchOriginal) {
  const std::vector<std::string> layout = {GetParam(), "mlp"};
  const Model m = make_toy_model(61, layout, 64);
  const auto data = make_token_set(62, 3, 12, 64);
  for (const auto& fusion : {FusionConfig::hadamard_all(), FusionConfig::none()}) {
    const Model f = apply_fusion(m, fusion);
    EXPECT_EQ(f.residual_hadamard, fusion.rotates_residual());
    for (double g : f.final_norm) EXPECT_EQ(g, 1.0);
    for (const auto& tokens : data.tokens)
      EXPECT_LE(relative_error(forward_tokens(f, tokens), forward_tokens(m, tokens)), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Blocks, FusedModel, ::testing::Values("mlp", "mhsa", "attn", "mamba"));

TEST(Fusion, NormFusionOnlyIsExact) {
  const Model m = make_toy_model(63, default_toy_layout(), 64);
  auto cfg = FusionConfig::none();
  const Model f = apply_fusion(m, cfg);
  const std::vector<int> tokens = {1, 5, 9, 33, 63};
  EXPECT_LE(relative_error(forward_tokens(f, tokens), forward_tokens(m, tokens)), 1e-12);
}

TEST(Fusion, FuseNormScalesRows) {
  const Matrix w = Matrix::from_rows({{1, 2}, {3, 4}});
  const std::vector<double> g = {2, -1};
  EXPECT_EQ(max_abs_diff(fuse_norm(g, w), Matrix::from_rows({{2, 4}, {-3, -4}})), 0.0);
}

TEST(Fusion, RotatedModelAcceptsHiddenInputs) {
  const Model m = make_toy_model(64, default_toy_layout(), 64);
  const Model f = apply_fusion(m, FusionConfig::hadamard_all());
  std::mt19937_64 rng(65);
  CalibrationSet set;
  set.hidden.push_back(oracle::random_matrix(6, m.d_hidden, rng));
  const Matrix want = forward_hidden(m, model_inputs(m, set)[0]);
  const Matrix got = forward_hidden(f, model_inputs(f, set)[0]);
  EXPECT_LE(relative_error(got, want), 1e-4);
}

TEST(Fusion, HadamardPreconditions) {
  const Model m = make_toy_model(66, default_toy_layout(), 64);
  EXPECT_THROW(hadamard_fuse(m, FusionConfig::hadamard_all()), UnsupportedError);
  const Model f = apply_fusion(m, FusionConfig::hadamard_all());
  EXPECT_THROW(hadamard_fuse(f, FusionConfig::hadamard_all()), UnsupportedError);
}

}  // namespace
}  // namespace sortq
