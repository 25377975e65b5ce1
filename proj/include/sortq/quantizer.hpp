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

#ifndef SORTQ_QUANTIZER_HPP
#define SORTQ_QUANTIZER_HPP

#include <cstddef>
#include <span>

#include "sortq/linalg.hpp"
#include "sortq/matrix.hpp"
#include "sortq/packing.hpp"

namespace sortq {

inline constexpr unsigned kDefaultBits = 4;
inline constexpr std::size_t kDefaultGroupSize = 128;
inline constexpr double kDefaultGptqDamp = 0.01;

/// Round-to-nearest group-wise symmetric quantization.
///
/// Per (column, row-group): s = max|W| / (2^(bits-1) - 1), rounded to half
/// precision, and codes = clamp(round_half_even(W / s)). When column_scale is
/// given, W is the unscaled factor of a QSVD column: codes come from W and
/// the stored scale is half(s * column_scale[col]).
QuantizedTensor quantize_group_sym(const Matrix& w, unsigned bits = kDefaultBits,
                                   std::size_t group_size = kDefaultGroupSize,
                                   std::span<const double> column_scale = {});

struct GptqResult {
  QuantizedTensor tensor;
  double objective = 0.0;      // tr((W - Wq)^T C (W - Wq))
  double damp_used = 0.0;      // relative damping after escalation
};

/// GPTQ: quantizes input channels (rows) in order and propagates each row's
/// rounding error onto the remaining rows through the upper Cholesky factor
/// of (C + damp * mean(diag C) * I)^-1. Damping doubles on Cholesky failure,
/// at most four times.
GptqResult gptq_compensate(const Matrix& w, const Matrix& correlation, unsigned bits = kDefaultBits,
                           std::size_t group_size = kDefaultGroupSize, double damp = kDefaultGptqDamp,
                           std::span<const double> column_scale = {});
GptqResult gptq_compensate(const Matrix& w, const CorrelationStats& stats, unsigned bits = kDefaultBits,
                           std::size_t group_size = kDefaultGroupSize, double damp = kDefaultGptqDamp,
                           std::span<const double> column_scale = {});

/// tr((W - V)^T C (W - V)).
double weighted_error(const Matrix& w, const Matrix& v, const Matrix& correlation);

}  // namespace sortq

#endif  // SORTQ_QUANTIZER_HPP
