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

#include "sortq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "sortq/errors.hpp"

namespace sortq {

namespace {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EigenRowMajor> as_eigen(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

template <typename Derived>
Matrix from_eigen(const Eigen::MatrixBase<Derived>& e) {
  Matrix out(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) out(i, j) = e(i, j);
  return out;
}

void require_square(const Matrix& c, const char* what) {
  if (c.rows() != c.cols()) throw ShapeError(std::string(what) + ": matrix is not square");
}

double default_floor(const SymmetricEigen& eig) {
  const double max_eig = eig.values.empty() ? 0.0 : std::max(eig.values.back(), 0.0);
  // An all-zero matrix still needs a positive floor.
  return max_eig > 0.0 ? 1e-6 * max_eig : 1e-12;
}

// Q diag(f(eig)) Q^T
Matrix spectral_apply(const SymmetricEigen& eig, const std::vector<double>& f) {
  const std::size_t n = eig.values.size();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += eig.vectors(i, k) * f[k] * eig.vectors(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

void count_inversion(std::size_t dim) {
  auto& c = op_counters();
  ++c.inversions;
  c.max_inverted_dim = std::max(c.max_inverted_dim, dim);
}

}  // namespace

OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

void reset_op_counters() { op_counters() = OpCounters{}; }

void CorrelationStats::accumulate(const Matrix& x) {
  if (x.cols() != dim_) {
    throw ShapeError("accumulate_correlation: expected " + std::to_string(dim_) + " columns, got " +
                     std::to_string(x.cols()));
  }
  if (!all_finite(x)) throw NumericalError("accumulate_correlation: non-finite activation");
  sum_ = add(sum_, matmul_tn(x, x));
  ++samples_;
}

void CorrelationStats::accumulate_gram(const Matrix& gram) {
  if (gram.rows() != dim_ || gram.cols() != dim_) throw ShapeError("accumulate_gram: shape mismatch");
  sum_ = add(sum_, gram);
  ++samples_;
}

Matrix CorrelationStats::finalize() const {
  if (samples_ == 0) throw CalibrationError("correlation has no samples");
  Matrix out(dim_, dim_);
  const double inv = 1.0 / static_cast<double>(samples_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) out(i, j) = 0.5 * (sum_(i, j) + sum_(j, i)) * inv;
  return out;
}

CorrelationStats accumulate_correlation(CorrelationStats stats, const Matrix& x) {
  stats.accumulate(x);
  return stats;
}

SymmetricEigen symmetric_eigen(const Matrix& c) {
  require_square(c, "symmetric_eigen");
  ++op_counters().eigendecompositions;
  const auto e = as_eigen(c);
  const EigenRowMajor sym = 0.5 * (e + e.transpose());
  Eigen::SelfAdjointEigenSolver<EigenRowMajor> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  SymmetricEigen out;
  out.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + c.rows());
  out.vectors = from_eigen(solver.eigenvectors());
  return out;
}

ScoreVector ridge_leverage(const Matrix& c, double lambda) {
  require_square(c, "ridge_leverage");
  if (!(lambda > 0.0)) throw NumericalError("ridge_leverage: lambda must be positive");
  ++op_counters().ridge_solves;
  const std::size_t n = c.rows();
  const auto eig = symmetric_eigen(c);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += c(i, i);
  const double tol = n == 0 ? 0.0 : 1e-6 * std::abs(trace) / static_cast<double>(n);
  if (!eig.values.empty() && eig.values.front() < -tol) {
    throw NumericalError("ridge_leverage: correlation matrix is not positive semidefinite");
  }
  ScoreVector scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ev = std::max(eig.values[i], 0.0);
    const double w = ev / (ev + lambda);
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double q = eig.vectors(j, i);
      scores[j] += w * q * q;
    }
  }
  return scores;
}

Matrix inv_sqrt_psd(const Matrix& c, std::optional<double> floor) {
  require_square(c, "inv_sqrt_psd");
  count_inversion(c.rows());
  const auto eig = symmetric_eigen(c);
  const double fl = floor.value_or(default_floor(eig));
  std::vector<double> f(eig.values.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 1.0 / std::sqrt(std::max(eig.values[i], fl));
  return spectral_apply(eig, f);
}

Matrix sqrt_psd(const Matrix& c) {
  require_square(c, "sqrt_psd");
  const auto eig = symmetric_eigen(c);
  std::vector<double> f(eig.values.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sqrt(std::max(eig.values[i], 0.0));
  return spectral_apply(eig, f);
}

Matrix floor_spectrum(const Matrix& c, std::optional<double> floor) {
  require_square(c, "floor_spectrum");
  const auto eig = symmetric_eigen(c);
  const double fl = floor.value_or(default_floor(eig));
  std::vector<double> f(eig.values.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::max(eig.values[i], fl);
  return spectral_apply(eig, f);
}

Matrix solve_psd(const Matrix& c, const Matrix& b, std::optional<double> floor) {
  require_square(c, "solve_psd");
  if (b.rows() != c.rows()) throw ShapeError("solve_psd: right-hand side row mismatch");
  count_inversion(c.rows());
  const auto eig = symmetric_eigen(c);
  const double fl = floor.value_or(default_floor(eig));
  const std::size_t n = c.rows();
  // x = Q diag(1/max(eig, floor)) Q^T b
  Matrix qtb = matmul_tn(eig.vectors, b);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / std::max(eig.values[i], fl);
    for (double& v : qtb.row(i)) v *= inv;
  }
  return matmul(eig.vectors, qtb);
}

ScoreVector column_norms(const Matrix& a) {
  ScoreVector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j) * a(i, j);
  for (double& v : out) v = std::sqrt(v);
  return out;
}

ScoreVector root_column_norms(const Matrix& c) { return column_norms(sqrt_psd(c)); }

SvdResult svd(const Matrix& w) {
  ++op_counters().svds;
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const std::size_t r = std::min(m, n);
  SvdResult out;
  if (r == 0) {
    out.u = Matrix(m, 0);
    out.vt = Matrix(0, n);
    return out;
  }
  const EigenRowMajor e = as_eigen(w);
  Eigen::BDCSVD<EigenRowMajor> solver(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericalError("svd failed");
  out.u = from_eigen(solver.matrixU());
  out.sigma.assign(solver.singularValues().data(), solver.singularValues().data() + r);
  out.vt = from_eigen(solver.matrixV().transpose());
  return out;
}

std::optional<Matrix> cholesky_lower(const Matrix& a) {
  require_square(a, "cholesky_lower");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

Matrix spd_inverse_from_cholesky(const Matrix& l) {
  require_square(l, "spd_inverse_from_cholesky");
  count_inversion(l.rows());
  const std::size_t n = l.rows();
  // L^-1 by forward substitution, then A^-1 = L^-T L^-1.
  Matrix l_inv(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t i = col; i < n; ++i) {
      double acc = i == col ? 1.0 : 0.0;
      for (std::size_t k = col; k < i; ++k) acc -= l(i, k) * l_inv(k, col);
      l_inv(i, col) = acc / l(i, i);
    }
  }
  return matmul_tn(l_inv, l_inv);
}

IndexVector argsort_desc(std::span<const double> scores) {
  IndexVector idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

bool is_permutation(std::span<const std::size_t> index, std::size_t n) {
  if (index.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (std::size_t i : index) {
    if (i >= n || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

IndexVector inverse_permutation(std::span<const std::size_t> index) {
  IndexVector inv(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) inv[index[i]] = i;
  return inv;
}

}  // namespace sortq
