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

#include "sortq/packing.hpp"

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "bytes.hpp"
#include "sortq/errors.hpp"

namespace sortq {

namespace {

constexpr std::uint16_t kTensorFormatVersion = 1;

void check_width(unsigned width) {
  if (width != 4 && width != 8) throw RangeError("packed width must be 4 or 8, got " + std::to_string(width));
}

}  // namespace

unsigned storage_bits(unsigned bits) {
  if (bits >= 2 && bits <= 4) return 4;
  if (bits >= 5 && bits <= 8) return 8;
  throw RangeError("unsupported bit width " + std::to_string(bits));
}

PackedBuffer pack_codes(std::span<const int> codes, unsigned width) {
  check_width(width);
  const int lo = -(1 << (width - 1));
  const int hi = (1 << (width - 1)) - 1;
  const std::size_t per_word = 32 / width;
  const std::uint32_t mask = (1u << width) - 1u;
  PackedBuffer buf;
  buf.bits = width;
  buf.n_values = codes.size();
  buf.words.assign((codes.size() + per_word - 1) / per_word, 0u);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int c = codes[i];
    if (c < lo || c > hi) {
      throw RangeError("code " + std::to_string(c) + " at " + std::to_string(i) + " outside [" +
                       std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    const auto field = static_cast<std::uint32_t>(c) & mask;
    buf.words[i / per_word] |= field << (width * (i % per_word));
  }
  return buf;
}

std::vector<int> unpack_codes(const PackedBuffer& buf) {
  check_width(buf.bits);
  const std::size_t per_word = 32 / buf.bits;
  if (buf.words.size() != (buf.n_values + per_word - 1) / per_word) throw FormatError("packed word count mismatch");
  const std::uint32_t mask = (1u << buf.bits) - 1u;
  const std::uint32_t sign = 1u << (buf.bits - 1);
  std::vector<int> codes(buf.n_values);
  for (std::size_t i = 0; i < buf.n_values; ++i) {
    const std::uint32_t field = (buf.words[i / per_word] >> (buf.bits * (i % per_word))) & mask;
    codes[i] = (field & sign) ? static_cast<int>(field) - static_cast<int>(mask + 1) : static_cast<int>(field);
  }
  return codes;
}

PackedBuffer pack_int4(std::span<const int> codes) { return pack_codes(codes, 4); }

std::vector<int> unpack_int4(const PackedBuffer& buf) {
  if (buf.bits != 4) throw FormatError("unpack_int4 on a non-nibble buffer");
  return unpack_codes(buf);
}

std::uint16_t to_half_bits(double value) {
  const Eigen::half h(static_cast<float>(value));
  return Eigen::numext::bit_cast<std::uint16_t>(h);
}

double from_half_bits(std::uint16_t bits) {
  return static_cast<double>(static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits)));
}

void QuantizedTensor::validate() const {
  if (group_size == 0) throw FormatError("group_size must be positive");
  if (packed.bits != storage_bits(bits)) throw FormatError("packed width does not match bit width");
  if (packed.n_values != rows * cols) throw FormatError("packed value count != rows * cols");
  const std::size_t per_word = 32 / packed.bits;
  if (packed.words.size() != (packed.n_values + per_word - 1) / per_word) throw FormatError("packed word count");
  if (scales.size() != cols * n_groups()) throw FormatError("scale count != cols * groups");
}

Matrix QuantizedTensor::dequantize() const {
  validate();
  const auto c = codes();
  Matrix out(rows, cols);
  const std::size_t ng = n_groups();
  for (std::size_t col = 0; col < cols; ++col) {
    for (std::size_t g = 0; g < ng; ++g) {
      const double s = from_half_bits(scales[col * ng + g]);
      const std::size_t end = std::min(rows, (g + 1) * group_size);
      for (std::size_t r = g * group_size; r < end; ++r) out(r, col) = static_cast<double>(c[col * rows + r]) * s;
    }
  }
  return out;
}

QuantizedTensor select_packed_columns(const QuantizedTensor& q, std::span<const std::size_t> cols) {
  q.validate();
  if (cols.empty()) throw EmptyTensorError("cannot keep zero columns");
  const auto codes = q.codes();
  const std::size_t ng = q.n_groups();
  std::vector<int> kept;
  kept.reserve(cols.size() * q.rows);
  QuantizedTensor out;
  out.rows = q.rows;
  out.cols = cols.size();
  out.bits = q.bits;
  out.group_size = q.group_size;
  for (std::size_t c : cols) {
    if (c >= q.cols) throw ShapeError("select_packed_columns: column out of range");
    kept.insert(kept.end(), codes.begin() + static_cast<std::ptrdiff_t>(c * q.rows),
                codes.begin() + static_cast<std::ptrdiff_t>((c + 1) * q.rows));
    out.scales.insert(out.scales.end(), q.scales.begin() + static_cast<std::ptrdiff_t>(c * ng),
                      q.scales.begin() + static_cast<std::ptrdiff_t>((c + 1) * ng));
  }
  out.packed = pack_codes(kept, q.packed.bits);
  return out;
}

QuantizedTensor prune_packed(const QuantizedTensor& q, std::size_t keep_cols) {
  if (keep_cols == 0) throw EmptyTensorError("prune_packed: keep_cols must be positive");
  if (keep_cols > q.cols) throw ShapeError("prune_packed: keep_cols exceeds column count");
  if (keep_cols == q.cols) return q;
  std::vector<std::size_t> idx(keep_cols);
  for (std::size_t i = 0; i < keep_cols; ++i) idx[i] = i;
  return select_packed_columns(q, idx);
}

QuantizedTensor prune_packed_rows(const QuantizedTensor& q, std::size_t keep_rows) {
  q.validate();
  if (keep_rows == 0) throw EmptyTensorError("prune_packed_rows: keep_rows must be positive");
  if (keep_rows > q.rows) throw ShapeError("prune_packed_rows: keep_rows exceeds row count");
  if (keep_rows == q.rows) return q;
  const auto codes = q.codes();
  const std::size_t ng_old = q.n_groups();
  QuantizedTensor out;
  out.rows = keep_rows;
  out.cols = q.cols;
  out.bits = q.bits;
  out.group_size = q.group_size;
  const std::size_t ng_new = out.n_groups();
  std::vector<int> kept;
  kept.reserve(keep_rows * q.cols);
  for (std::size_t c = 0; c < q.cols; ++c) {
    kept.insert(kept.end(), codes.begin() + static_cast<std::ptrdiff_t>(c * q.rows),
                codes.begin() + static_cast<std::ptrdiff_t>(c * q.rows + keep_rows));
    for (std::size_t g = 0; g < ng_new; ++g) out.scales.push_back(q.scales[c * ng_old + g]);
  }
  out.packed = pack_codes(kept, q.packed.bits);
  return out;
}

std::vector<std::uint8_t> serialize_quantized(const QuantizedTensor& q) {
  q.validate();
  detail::ByteWriter w;
  w.str("UQPK");
  w.u16(kTensorFormatVersion);
  w.u32(static_cast<std::uint32_t>(q.rows));
  w.u32(static_cast<std::uint32_t>(q.cols));
  w.u8(static_cast<std::uint8_t>(q.bits));
  w.u16(static_cast<std::uint16_t>(q.group_size));
  for (auto s : q.scales) w.u16(s);
  for (auto word : q.packed.words) w.u32(word);
  return std::move(w.bytes());
}

QuantizedTensor deserialize_quantized(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.str(4) != "UQPK") throw FormatError("bad quantized tensor magic");
  if (r.u16() != kTensorFormatVersion) throw FormatError("unsupported quantized tensor version");
  QuantizedTensor q;
  q.rows = r.u32();
  q.cols = r.u32();
  q.bits = r.u8();
  q.group_size = r.u16();
  if (q.group_size == 0) throw FormatError("group_size must be positive");
  if (q.bits < 2 || q.bits > 8) throw FormatError("unsupported bit width " + std::to_string(q.bits));
  q.packed.bits = storage_bits(q.bits);
  q.packed.n_values = q.rows * q.cols;
  const std::size_t per_word = 32 / q.packed.bits;
  const std::size_t n_scales = q.cols * q.n_groups();
  const std::size_t n_words = (q.packed.n_values + per_word - 1) / per_word;
  // Sizes come from untrusted headers: check them before allocating.
  if (r.remaining() != 2 * n_scales + 4 * n_words) throw FormatError("quantized tensor size does not match header");
  q.scales.resize(n_scales);
  for (auto& s : q.scales) s = r.u16();
  q.packed.words.resize(n_words);
  for (auto& word : q.packed.words) word = r.u32();
  if (r.remaining() != 0) throw FormatError("trailing bytes after quantized tensor");
  q.validate();
  return q;
}

}  // namespace sortq
