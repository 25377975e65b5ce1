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

#include "sortq/matrix.hpp"

#include <cmath>
#include <string>

#include "sortq/errors.hpp"

namespace sortq {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw NumericalError("matrix entry is not finite");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t t = 0; t < a.rows(); ++t) {
    auto arow = a.row(t);
    auto brow = b.row(t);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += ai * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto d = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  auto d = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
  return out;
}

Matrix scaled(const Matrix& a, double factor) {
  Matrix out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double diff = frobenius_norm(subtract(a, b));
  const double ref = frobenius_norm(b);
  return ref > 0.0 ? diff / ref : diff;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Matrix column_block(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) throw ShapeError("column_block out of range");
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, first + j);
  return out;
}

Matrix row_block(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.rows()) throw ShapeError("row_block out of range");
  Matrix out(count, a.cols());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(first + i, j);
  return out;
}

void set_column_block(Matrix& dst, std::size_t first, const Matrix& src) {
  if (src.rows() != dst.rows() || first + src.cols() > dst.cols())
    throw ShapeError("set_column_block out of range");
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, first + j) = src(i, j);
}

void set_row_block(Matrix& dst, std::size_t first, const Matrix& src) {
  if (src.cols() != dst.cols() || first + src.rows() > dst.rows())
    throw ShapeError("set_row_block out of range");
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(first + i, j) = src(i, j);
}

Matrix gather_columns(const Matrix& a, std::span<const std::size_t> index) {
  Matrix out(a.rows(), index.size());
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] >= a.cols()) throw ShapeError("gather_columns index out of range");
  }
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < index.size(); ++j) out(i, j) = a(i, index[j]);
  return out;
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> index) {
  Matrix out(index.size(), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw ShapeError("gather_rows index out of range");
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(index[i], j);
  }
  return out;
}

Matrix hstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw ShapeError("hstack: row counts differ");
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    set_column_block(out, at, p);
    at += p.cols();
  }
  return out;
}

Matrix vstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw ShapeError("vstack: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::size_t at = 0;
  for (const auto& p : parts) {
    set_row_block(out, at, p);
    at += p.rows();
  }
  return out;
}

Matrix scale_rows(const Matrix& a, std::span<const double> factors) {
  if (factors.size() != a.rows()) throw ShapeError("scale_rows: factor count != rows");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double& v : out.row(i)) v *= factors[i];
  return out;
}

Matrix scale_columns(const Matrix& a, std::span<const double> factors) {
  if (factors.size() != a.cols()) throw ShapeError("scale_columns: factor count != cols");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] *= factors[j];
  }
  return out;
}

bool all_finite(const Matrix& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace sortq
