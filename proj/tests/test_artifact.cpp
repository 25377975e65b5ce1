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

#include <filesystem>
#include <random>

#include <unistd.h>

#include "oracles.hpp"
#include "sortq/artifact.hpp"
#include "sortq/errors.hpp"
#include "sortq/pipeline.hpp"
#include "sortq/quantizer.hpp"

namespace sortq {
namespace {

const ModelArtifact& compressed() {
  static const ModelArtifact a = [] {
    const Model m = make_toy_model(71, default_toy_layout(), 64);
    CompressConfig cfg;
    cfg.group_size = 32;
    return compress(m, make_token_set(72, 4, 24, 64), cfg);
  }();
  return a;
}

TEST(Interleave, RankMajorLayout) {
  const auto idx = interleave_rows(6, 3);
  EXPECT_EQ(idx, (IndexVector{0, 2, 4, 1, 3, 5}));
  EXPECT_TRUE(is_permutation(interleave_rows(64, 4), 64));
  EXPECT_THROW(interleave_rows(7, 3), ShapeError);
}

TEST(ArtifactTensor, InterleavedQuantizedRoundTrip) {
  std::mt19937_64 rng(73);
  const Matrix w = oracle::random_matrix(12, 5, rng);
  const auto order = interleave_rows(12, 3);
  const auto t = ArtifactTensor::make_quantized("x", quantize_group_sym(gather_rows(w, order), 4, 4), 3);
  EXPECT_EQ(t.rows(), 12u);
  EXPECT_EQ(t.cols(), 5u);
  const Matrix deq = t.to_matrix();
  EXPECT_LE(relative_error(deq, w), 0.2);
  // The logical matrix is the de-interleaved dequantization.
  EXPECT_EQ(max_abs_diff(gather_rows(deq, order), t.q.dequantize()), 0.0);
}

TEST(ArtifactTensor, DenseValuesRoundedToStorage) {
  const Matrix w = Matrix::from_rows({{1.0 / 3.0, 1e-3}});
  const auto f16 = ArtifactTensor::make_dense("w", w, TensorDtype::f16);
  EXPECT_EQ(f16.dense(0, 0), from_half_bits(to_half_bits(1.0 / 3.0)));
  const auto f32 = ArtifactTensor::make_dense("w", w, TensorDtype::f32);
  EXPECT_EQ(f32.dense(0, 0), static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST(Artifact, FpModelRoundTrip) {
  const Model m = make_toy_model(74, default_toy_layout(), 64);
  const auto a = artifact_from_model(m);
  const auto b = deserialize_artifact(serialize_artifact(a));
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_artifact(b), serialize_artifact(a));
  const Model back = model_from_artifact(b);
  const std::vector<int> tokens = {3, 1, 4, 1, 5};
  EXPECT_LE(relative_error(forward_tokens(back, tokens), forward_tokens(m, tokens)), 1e-5);
}

TEST(Artifact, CompressedRoundTripThroughFile) {
  const auto& a = compressed();
  const auto path = (std::filesystem::temp_directory_path() / ("sortq_artifact_" + std::to_string(::getpid()) + ".uqa")).string();
  write_artifact(a, path);
  const auto b = read_artifact(path);
  std::filesystem::remove(path);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b.kind, ArtifactKind::quantized);
  ASSERT_TRUE(b.quant.has_value());
  EXPECT_EQ(b.quant->bits, 4u);
  EXPECT_EQ(b.layers.size(), default_toy_layout().size());
  EXPECT_TRUE(b.residual_hadamard);
  // Manifest is parseable JSON with a tensor index.
  const auto j = manifest_json(b, 2);
  EXPECT_NE(j.find("\"tensors\""), std::string::npos);
}

TEST(Artifact, CorruptContainersAreRejected) {
  const auto bytes = serialize_artifact(compressed());
  auto bad_magic = bytes;
  bad_magic[1] = '?';
  EXPECT_THROW(deserialize_artifact(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_artifact(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(1);
  EXPECT_THROW(deserialize_artifact(trailing), Error);
  EXPECT_THROW(deserialize_artifact(std::vector<std::uint8_t>{}), FormatError);
  EXPECT_THROW(read_artifact("/nonexistent/dir/x.uqa"), Error);
}

TEST(Artifact, ValidateCatchesInconsistency) {
  auto a = compressed();
  a.tensors.push_back(a.tensors.front());
  EXPECT_THROW(a.validate(), FormatError);
  auto b = compressed();
  b.tensors.pop_back();
  EXPECT_THROW(b.validate(), Error);
}

TEST(Artifact, Fp16EquivalentIsDense) {
  const auto& a = compressed();
  const auto e = to_fp16_equivalent(a);
  ASSERT_EQ(e.tensors.size(), a.tensors.size());
  for (std::size_t i = 0; i < e.tensors.size(); ++i) {
    EXPECT_EQ(e.tensors[i].dtype, TensorDtype::f16);
    EXPECT_EQ(e.tensors[i].rows(), a.tensors[i].rows());
    EXPECT_EQ(e.tensors[i].cols(), a.tensors[i].cols());
  }
  EXPECT_GT(serialize_artifact(e).size(), serialize_artifact(a).size());
}

TEST(Artifact, TensorNames) {
  EXPECT_EQ(layer_tensor_name(3, "mlp.up"), "layers.3.mlp.up");
  const auto& a = compressed();
  EXPECT_TRUE(a.has_tensor("embedding"));
  EXPECT_TRUE(a.has_tensor("layers.0.attn.q"));
  EXPECT_TRUE(a.has_tensor("layers.2.mamba.out"));
  EXPECT_FALSE(a.has_tensor("layers.0.norm"));  // folded into the readers
  EXPECT_THROW(a.tensor("nope"), Error);
}

}  // namespace
}  // namespace sortq
