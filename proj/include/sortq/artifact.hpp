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

#ifndef SORTQ_ARTIFACT_HPP
#define SORTQ_ARTIFACT_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sortq/allocation.hpp"
#include "sortq/fusion.hpp"
#include "sortq/model.hpp"
#include "sortq/packing.hpp"
#include "sortq/sorting.hpp"

namespace sortq {

inline constexpr std::uint32_t kArtifactFormatVersion = 1;

enum class ArtifactKind { fp, quantized };
enum class TensorDtype : std::uint8_t { quantized = 1, f32 = 2, f16 = 3 };

std::string to_string(ArtifactKind kind);
std::string to_string(TensorDtype dtype);

/// A named tensor. Dense values are kept rounded to their storage precision
/// so an in-memory artifact and its deserialized copy compare equal.
struct ArtifactTensor {
  std::string name;
  TensorDtype dtype = TensorDtype::f32;
  QuantizedTensor q;  // dtype == quantized
  Matrix dense;       // dtype == f32 / f16
  // Rank-major row layout across `interleave` heads: stored row j*H + h holds
  // logical row h*(rows/H) + j, so per-head row prefixes form one prefix.
  // 0 means plain row order.
  std::size_t interleave = 0;

  static ArtifactTensor make_dense(std::string name, const Matrix& values, TensorDtype dtype);
  /// `q` must already be in the stored (possibly interleaved) row order.
  static ArtifactTensor make_quantized(std::string name, QuantizedTensor q, std::size_t interleave = 0);

  std::size_t rows() const;
  std::size_t cols() const;
  Matrix to_matrix() const;

  bool operator==(const ArtifactTensor&) const = default;
};

struct QuantConfig {
  unsigned bits = 4;
  std::size_t group_size = 128;
  double damp = 0.01;

  bool operator==(const QuantConfig&) const = default;
};

/// Everything the device needs to rebuild and prune one layer.
struct LayerRecord {
  BlockKind kind = BlockKind::mlp;
  BlockSpec spec;
  double rope_theta = 10000.0;
  std::vector<SortRecord> sort_records;
  std::vector<std::vector<double>> spectrum;  // QSVD singular values per head
  std::vector<IndexVector> rope_gather;

  bool operator==(const LayerRecord&) const = default;
};

struct ModelArtifact {
  ArtifactKind kind = ArtifactKind::fp;
  std::size_t vocab = 0;
  std::size_t d_hidden = 0;
  double norm_eps = 1e-6;
  bool residual_hadamard = false;
  std::vector<LayerRecord> layers;
  PruningPlan plan;
  FusionConfig fusion;  // defaults to "nothing applied"
  std::optional<QuantConfig> quant;
  double pruned_rate = 0.0;
  std::optional<double> self_check;  // zero-prune relative logit residual
  std::vector<ArtifactTensor> tensors;

  const ArtifactTensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
  void validate() const;

  bool operator==(const ModelArtifact&) const = default;
};

/// "UQAR", u32 version, u32 manifest length, manifest JSON, u32 tensor count,
/// then per tensor: u32 name length, name, u8 dtype, u64 blob length, blob.
std::vector<std::uint8_t> serialize_artifact(const ModelArtifact& a);
ModelArtifact deserialize_artifact(std::span<const std::uint8_t> bytes);
/// Manifest JSON as stored in the container (indent < 0 = compact).
std::string manifest_json(const ModelArtifact& a, int indent = -1);

void write_artifact(const ModelArtifact& a, const std::string& path);
ModelArtifact read_artifact(const std::string& path);

/// Unsorted, unquantized container for a model.
ModelArtifact artifact_from_model(const Model& model, TensorDtype dtype = TensorDtype::f32);
/// Rebuilds the (dequantized) model described by an artifact.
Model model_from_artifact(const ModelArtifact& a);
/// The same artifact with every tensor stored as dense fp16.
ModelArtifact to_fp16_equivalent(const ModelArtifact& a);

/// Row permutation from logical order to rank-major storage order:
/// result[j*heads + h] = h*(rows/heads) + j.
IndexVector interleave_rows(std::size_t rows, std::size_t heads);

/// Canonical tensor names, e.g. "layers.3.mlp.up".
std::string layer_tensor_name(std::size_t layer, const std::string& suffix);

}  // namespace sortq

#endif  // SORTQ_ARTIFACT_HPP
