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

#ifndef SORTQ_PACKING_HPP
#define SORTQ_PACKING_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sortq/matrix.hpp"

namespace sortq {

/// Signed integer codes packed into 32-bit words, little-endian field order:
/// code i occupies bits [w*(i mod k), w*(i mod k)+w) of word i/k, k = 32/w.
struct PackedBuffer {
  std::vector<std::uint32_t> words;
  std::size_t n_values = 0;
  unsigned bits = 4;  // storage width per code: 4 or 8

  bool operator==(const PackedBuffer&) const = default;
};

PackedBuffer pack_int4(std::span<const int> codes);
std::vector<int> unpack_int4(const PackedBuffer& buf);

/// Storage width used for a quantizer bit width: codes of 3 or 4 bits use
/// nibbles, 5..8 bits use bytes.
unsigned storage_bits(unsigned bits);
PackedBuffer pack_codes(std::span<const int> codes, unsigned width);
std::vector<int> unpack_codes(const PackedBuffer& buf);

std::uint16_t to_half_bits(double value);
double from_half_bits(std::uint16_t bits);

/// Group-wise symmetric quantized matrix. Groups run along the input (row)
/// dimension inside each output column; codes are stored column-major.
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  unsigned bits = 4;
  std::size_t group_size = 128;
  PackedBuffer packed;
  std::vector<std::uint16_t> scales;  // IEEE half, index col * n_groups() + group

  std::size_t n_groups() const { return (rows + group_size - 1) / group_size; }
  double scale(std::size_t col, std::size_t group) const { return from_half_bits(scales[col * n_groups() + group]); }
  std::vector<int> codes() const { return unpack_codes(packed); }
  Matrix dequantize() const;
  void validate() const;

  bool operator==(const QuantizedTensor&) const = default;
};

/// Keeps the first keep_cols output columns and their scales.
QuantizedTensor prune_packed(const QuantizedTensor& q, std::size_t keep_cols);
/// Keeps the first keep_rows input rows; a partially kept group keeps its scale.
QuantizedTensor prune_packed_rows(const QuantizedTensor& q, std::size_t keep_rows);
/// Keeps an arbitrary ordered subset of output columns.
QuantizedTensor select_packed_columns(const QuantizedTensor& q, std::span<const std::size_t> cols);

/// Binary layout, little-endian: "UQPK", u16 version, u32 rows, u32 cols,
/// u8 bits, u16 group_size, half scales, packed words.
std::vector<std::uint8_t> serialize_quantized(const QuantizedTensor& q);
QuantizedTensor deserialize_quantized(std::span<const std::uint8_t> bytes);

}  // namespace sortq

#endif  // SORTQ_PACKING_HPP
