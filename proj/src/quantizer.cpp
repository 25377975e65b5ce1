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

#include "sortq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sortq/errors.hpp"

namespace sortq {

namespace {

struct Grid {
  int lo;
  int hi;
};

Grid grid_for(unsigned bits) {
  if (bits < 2 || bits > 8) throw RangeError("bits must be in [2, 8], got " + std::to_string(bits));
  return {-(1 << (bits - 1)), (1 << (bits - 1)) - 1};
}

// Half-precision step for a group whose largest magnitude is max_abs.
std::uint16_t group_step(double max_abs, const Grid& grid) {
  const std::uint16_t h = to_half_bits(max_abs / grid.hi);
  if (!std::isfinite(from_half_bits(h))) throw NumericalError("quantization scale overflows half precision");
  return h;
}

int quantize_value(double w, double step, const Grid& grid) {
  if (step == 0.0) return 0;
  const double q = std::nearbyint(w / step);
  return static_cast<int>(std::clamp(q, static_cast<double>(grid.lo), static_cast<double>(grid.hi)));
}

void check_args(const Matrix& w, std::size_t group_size, std::span<const double> column_scale) {
  if (group_size == 0) throw RangeError("group_size must be positive");
  if (w.empty()) throw EmptyTensorError("cannot quantize an empty matrix");
  if (!column_scale.empty() && column_scale.size() != w.cols())
    throw ShapeError("column_scale length != column count");
  for (double s : column_scale) {
    if (!std::isfinite(s) || s < 0.0) throw NumericalError("column_scale must be finite and non-negative");
  }
}

std::uint16_t stored_scale(std::uint16_t step, std::span<const double> column_scale, std::size_t col) {
  if (column_scale.empty()) return step;
  return to_half_bits(from_half_bits(step) * column_scale[col]);
}

}  // namespace

QuantizedTensor quantize_group_sym(const Matrix& w, unsigned bits, std::size_t group_size,
                                   std::span<const double> column_scale) {
  check_args(w, group_size, column_scale);
  const Grid grid = grid_for(bits);
  QuantizedTensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.bits = bits;
  q.group_size = group_size;
  const std::size_t ng = q.n_groups();
  q.scales.resize(q.cols * ng);
  std::vector<int> codes(q.rows * q.cols);
  for (std::size_t c = 0; c < q.cols; ++c) {
    for (std::size_t g = 0; g < ng; ++g) {
      const std::size_t begin = g * group_size;
      const std::size_t end = std::min(q.rows, begin + group_size);
      double max_abs = 0.0;
      for (std::size_t r = begin; r < end; ++r) max_abs = std::max(max_abs, std::abs(w(r, c)));
      const std::uint16_t step = group_step(max_abs, grid);
      const double s = from_half_bits(step);
      for (std::size_t r = begin; r < end; ++r) codes[c * q.rows + r] = quantize_value(w(r, c), s, grid);
      q.scales[c * ng + g] = stored_scale(step, column_scale, c);
    }
  }
  q.packed = pack_codes(codes, storage_bits(bits));
  return q;
}

double weighted_error(const Matrix& w, const Matrix& v, const Matrix& correlation) {
  const Matrix d = subtract(w, v);
  if (correlation.rows() != d.rows() || correlation.cols() != d.rows())
    throw ShapeError("weighted_error: correlation does not match input dimension");
  const Matrix cd = matmul(correlation, d);
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) acc += d.data()[i] * cd.data()[i];
  return acc;
}

GptqResult gptq_compensate(const Matrix& w_in, const Matrix& correlation, unsigned bits, std::size_t group_size,
                           double damp, std::span<const double> column_scale) {
  check_args(w_in, group_size, column_scale);
  const Grid grid = grid_for(bits);
  const std::size_t n = w_in.rows();
  const std::size_t m = w_in.cols();
  if (correlation.rows() != n || correlation.cols() != n)
    throw ShapeError("gptq: correlation must be " + std::to_string(n) + "x" + std::to_string(n));
  if (!(damp > 0.0)) throw NumericalError("gptq: damp must be positive");

  Matrix w = w_in;
  Matrix h = correlation;
  // Inputs that never fire carry no information; pin them so H stays invertible.
  for (std::size_t i = 0; i < n; ++i) {
    if (h(i, i) == 0.0) {
      h(i, i) = 1.0;
      for (double& v : w.row(i)) v = 0.0;
    }
  }
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += h(i, i);
  mean_diag /= static_cast<double>(n);

  std::optional<Matrix> chol;
  double rel = damp;
  for (int attempt = 0; attempt <= 4; ++attempt, rel *= 2.0) {
    Matrix damped = h;
    for (std::size_t i = 0; i < n; ++i) damped(i, i) += rel * mean_diag;
    chol = cholesky_lower(damped);
    if (chol) break;
  }
  if (!chol) throw NumericalError("gptq: Cholesky failed after damping escalation");
  const double damp_used = rel;

  // Upper factor U of H^-1 = U^T U, obtained as the transposed lower
  // Cholesky factor of H^-1.
  const Matrix h_inv = spd_inverse_from_cholesky(*chol);
  const auto inv_chol = cholesky_lower(h_inv);
  if (!inv_chol) throw NumericalError("gptq: inverse Hessian is not positive definite");
  const Matrix upper = transpose(*inv_chol);

  QuantizedTensor q;
  q.rows = n;
  q.cols = m;
  q.bits = bits;
  q.group_size = group_size;
  const std::size_t ng = q.n_groups();
  q.scales.resize(m * ng);
  std::vector<int> codes(n * m);
  std::vector<double> step(m, 0.0);
  std::vector<double> err(m, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (j % group_size == 0) {
      const std::size_t g = j / group_size;
      const std::size_t end = std::min(n, j + group_size);
      for (std::size_t c = 0; c < m; ++c) {
        double max_abs = 0.0;
        for (std::size_t r = j; r < end; ++r) max_abs = std::max(max_abs, std::abs(w(r, c)));
        const std::uint16_t s = group_step(max_abs, grid);
        step[c] = from_half_bits(s);
        q.scales[c * ng + g] = stored_scale(s, column_scale, c);
      }
    }
    const double d = upper(j, j);
    for (std::size_t c = 0; c < m; ++c) {
      const int code = quantize_value(w(j, c), step[c], grid);
      codes[c * n + j] = code;
      err[c] = (w(j, c) - code * step[c]) / d;
    }
    for (std::size_t k = j + 1; k < n; ++k) {
      const double u = upper(j, k);
      if (u == 0.0) continue;
      auto row = w.row(k);
      for (std::size_t c = 0; c < m; ++c) row[c] -= err[c] * u;
    }
  }
  q.packed = pack_codes(codes, storage_bits(bits));

  GptqResult out;
  out.damp_used = damp_used;
  const Matrix reference = column_scale.empty() ? w_in : scale_columns(w_in, column_scale);
  out.objective = weighted_error(reference, q.dequantize(), correlation);
  out.tensor = std::move(q);
  return out;
}

GptqResult gptq_compensate(const Matrix& w, const CorrelationStats& stats, unsigned bits, std::size_t group_size,
                           double damp, std::span<const double> column_scale) {
  return gptq_compensate(w, stats.finalize(), bits, group_size, damp, column_scale);
}

}  // namespace sortq
