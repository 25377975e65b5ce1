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

#ifndef SORTQ_MATRIX_HPP
#define SORTQ_MATRIX_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace sortq {

/// Dense row-major matrix of doubles.
///
/// Weights follow the activation-times-weight convention: a projection from
/// D_in to D_out features is stored as a D_in x D_out matrix and applied as
/// `X * W` with X of shape T x D_in.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  /// Checked constructor: data.size() must equal rows*cols and every entry
  /// must be finite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double factor);

double frobenius_norm(const Matrix& a);
/// ||a - b||_F / ||b||_F (absolute error when b is zero).
double relative_error(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);

Matrix column_block(const Matrix& a, std::size_t first, std::size_t count);
Matrix row_block(const Matrix& a, std::size_t first, std::size_t count);
void set_column_block(Matrix& dst, std::size_t first, const Matrix& src);
void set_row_block(Matrix& dst, std::size_t first, const Matrix& src);

/// out(:, j) = a(:, index[j])
Matrix gather_columns(const Matrix& a, std::span<const std::size_t> index);
/// out(i, :) = a(index[i], :)
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> index);

Matrix hstack(std::span<const Matrix> parts);
Matrix vstack(std::span<const Matrix> parts);

/// Scales row i by factors[i].
Matrix scale_rows(const Matrix& a, std::span<const double> factors);
/// Scales column j by factors[j].
Matrix scale_columns(const Matrix& a, std::span<const double> factors);

bool all_finite(const Matrix& a);
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace sortq

#endif  // SORTQ_MATRIX_HPP
