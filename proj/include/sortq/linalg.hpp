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

#ifndef SORTQ_LINALG_HPP
#define SORTQ_LINALG_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sortq/matrix.hpp"

namespace sortq {

using IndexVector = std::vector<std::size_t>;
using ScoreVector = std::vector<double>;

/// Running sum of Gram matrices X^T X over calibration samples.
class CorrelationStats {
 public:
  CorrelationStats() = default;
  explicit CorrelationStats(std::size_t dim) : dim_(dim), sum_(dim, dim) {}

  /// sum += X^T X, samples_seen += 1. X must have `dim` columns.
  void accumulate(const Matrix& x);
  /// Adds an already-formed Gram matrix as one sample.
  void accumulate_gram(const Matrix& gram);
  /// sum / samples_seen, symmetrized. Throws CalibrationError when empty.
  Matrix finalize() const;

  std::size_t dim() const { return dim_; }
  std::size_t samples_seen() const { return samples_; }
  const Matrix& sum() const { return sum_; }

 private:
  std::size_t dim_ = 0;
  std::size_t samples_ = 0;
  Matrix sum_;
};

CorrelationStats accumulate_correlation(CorrelationStats stats, const Matrix& x);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column i pairs with values[i]
};

/// Eigendecomposition of the symmetric part (C + C^T) / 2.
SymmetricEigen symmetric_eigen(const Matrix& c);

/// diag(C (C + lambda I)^-1) computed from the eigendecomposition of C.
/// Throws NumericalError if C is not PSD within -1e-6 * trace / dim.
ScoreVector ridge_leverage(const Matrix& c, double lambda);

/// Q diag(max(eig, floor))^-1/2 Q^T. The default floor is 1e-6 * max_eig.
Matrix inv_sqrt_psd(const Matrix& c, std::optional<double> floor = std::nullopt);
/// PSD square root; negative round-off eigenvalues are clamped to zero.
Matrix sqrt_psd(const Matrix& c);
/// Q diag(max(eig, floor)) Q^T: a full-rank stand-in for a rank-deficient
/// correlation, so its roots and solves invert each other exactly.
Matrix floor_spectrum(const Matrix& c, std::optional<double> floor = std::nullopt);
/// C^-1 B with eigenvalues floored at `floor` (default 1e-6 * max_eig).
Matrix solve_psd(const Matrix& c, const Matrix& b, std::optional<double> floor = std::nullopt);

/// Column 2-norms of the PSD square root of C.
ScoreVector root_column_norms(const Matrix& c);
ScoreVector column_norms(const Matrix& a);

struct SvdResult {
  Matrix u;                   // m x r
  std::vector<double> sigma;  // r, descending, non-negative
  Matrix vt;                  // r x n
};

/// Thin SVD with r = min(m, n).
SvdResult svd(const Matrix& w);

/// Lower Cholesky factor, or nullopt when the matrix is not positive definite.
std::optional<Matrix> cholesky_lower(const Matrix& a);
/// A^-1 from the lower Cholesky factor L of A (A = L L^T).
Matrix spd_inverse_from_cholesky(const Matrix& l);

/// Stable descending argsort: ties keep ascending original index.
IndexVector argsort_desc(std::span<const double> scores);
bool is_permutation(std::span<const std::size_t> index, std::size_t n);
IndexVector inverse_permutation(std::span<const std::size_t> index);

/// Counts expensive dense operations on the calling thread. Used to check
/// that sorting code stays free of explicit matrix inversions.
struct OpCounters {
  std::size_t ridge_solves = 0;
  std::size_t inversions = 0;  // inverse, inverse square root, or floored solve
  std::size_t eigendecompositions = 0;
  std::size_t svds = 0;
  std::size_t max_inverted_dim = 0;
};

OpCounters& op_counters();
void reset_op_counters();

}  // namespace sortq

#endif  // SORTQ_LINALG_HPP
