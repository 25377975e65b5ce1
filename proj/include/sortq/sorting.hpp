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

#ifndef SORTQ_SORTING_HPP
#define SORTQ_SORTING_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sortq/blocks.hpp"
#include "sortq/linalg.hpp"

namespace sortq {

enum class SortKind { permute_mlp, permute_qk_symmetric, qsvd_vo, permute_bc, permute_zxo };
enum class AttnMode { mhsa, gqa };

std::string to_string(SortKind kind);
SortKind sort_kind_from_string(const std::string& s);

/// One sorting step applied to a weight group. `indices` is the permutation
/// (empty for qsvd_vo); `sigma` holds the fused singular values (qsvd_vo only).
struct SortRecord {
  std::string target;
  SortKind kind = SortKind::permute_mlp;
  bool per_head = false;
  std::size_t head = 0;  // head, kv head, or group index when per_head
  IndexVector indices;
  std::vector<double> sigma;

  bool operator==(const SortRecord&) const = default;
};

/// Per-head singular values fused into the value projection, descending.
struct SingularSpectrum {
  std::vector<std::vector<double>> per_head;
};

struct MlpSortResult {
  MlpWeights weights;
  SortRecord record;
};

struct QkSortResult {
  AttnWeights weights;
  std::vector<SortRecord> records;       // one per kv head
  std::vector<IndexVector> rope_gather;  // half-dimension permutation per kv head
};

struct VoSortResult {
  AttnWeights weights;
  SingularSpectrum spectrum;  // per head (mhsa) or per kv head (gqa)
  std::vector<SortRecord> records;
};

struct MambaSortResult {
  MambaWeights weights;
  std::vector<SortRecord> records;
};

/// Ridge-leverage ordering of the MLP intermediate channels.
MlpSortResult sort_mlp(const MlpWeights& w, std::span<const CalibrationCapture> calib, double lambda = 1.0);

/// Symmetric query/key sorting that keeps RoPE pairs (j, j + D/2) together.
QkSortResult sort_qk(const AttnWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib,
                     AttnMode mode);

/// Quantization-aware SVD refactoring of the value/output pair.
VoSortResult sort_vo(const AttnWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib,
                     AttnMode mode);

/// Delta-weighted B/C state-channel sorting, per SSM group.
MambaSortResult sort_bc(const MambaWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib);

/// State-aware z/x/out head-channel sorting, per SSM head.
MambaSortResult sort_zxo(const MambaWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib,
                         double lambda = 1.0);

/// Norm-product score sum_q ||C_q^1/2|| * ||C_k^1/2|| for one kv head group.
ScoreVector qk_group_scores(const BlockSpec& spec, std::span<const CalibrationCapture> calib, std::size_t kv_head);
/// Sum over heads in group g of ||(dC_B)_h^1/2|| * ||C_C^1/2||.
ScoreVector bc_group_scores(const BlockSpec& spec, std::span<const CalibrationCapture> calib, std::size_t group);

/// [pi, D/2 + pi]
IndexVector symmetric_index(std::span<const std::size_t> half_perm);

// Exact-equivalence permutations. Each reorders one head (or the whole MLP).
MlpWeights permute_mlp(const MlpWeights& w, std::span<const std::size_t> idx);
AttnWeights permute_qk(const AttnWeights& w, const BlockSpec& spec, std::size_t kv_head,
                       std::span<const std::size_t> idx);
MambaWeights permute_bc(const MambaWeights& w, const BlockSpec& spec, std::size_t group,
                        std::span<const std::size_t> idx);
MambaWeights permute_zxo(const MambaWeights& w, const BlockSpec& spec, std::size_t head,
                         std::span<const std::size_t> idx);

/// Reorders columns [first, first + idx.size()) so out(:, first + j) = in(:, first + idx[j]).
Matrix permute_column_block(const Matrix& m, std::size_t first, std::span<const std::size_t> idx);
Matrix permute_row_block(const Matrix& m, std::size_t first, std::span<const std::size_t> idx);

}  // namespace sortq

#endif  // SORTQ_SORTING_HPP
