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

#ifndef SORTQ_FUSION_HPP
#define SORTQ_FUSION_HPP

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "sortq/matrix.hpp"
#include "sortq/model.hpp"

namespace sortq {

struct HadamardFlags {
  bool input = false;
  bool output = false;

  bool operator==(const HadamardFlags&) const = default;
};

/// Per-operator Hadamard flags. Operators whose input (o_proj, down_proj,
/// out_proj) or output (every other projection) is a prunable dimension must
/// keep that flag off so channel slicing stays valid.
struct FusionConfig {
  std::map<std::string, HadamardFlags> ops;
  bool norm_fusion = true;

  /// Rotation on every residual-stream interface.
  static FusionConfig hadamard_all();
  /// No rotation at all (the Qwen-style configuration).
  static FusionConfig none();

  void validate() const;
  bool rotates_residual() const;

  bool operator==(const FusionConfig&) const = default;
};

/// Orthonormal Sylvester-Hadamard matrix; n must be a power of two.
Matrix hadamard_matrix(std::size_t n);

/// diag(gamma) * reader.
Matrix fuse_norm(std::span<const double> gamma, const Matrix& reader);
/// Folds every RMSNorm scale into the projections that read it.
Model fuse_norms(const Model& model);
/// Rotates the residual stream by H. Requires scale-free norms.
Model hadamard_fuse(const Model& model, const FusionConfig& config);
/// Norm fusion (when enabled) followed by Hadamard fusion.
Model apply_fusion(const Model& model, const FusionConfig& config);

}  // namespace sortq

#endif  // SORTQ_FUSION_HPP
