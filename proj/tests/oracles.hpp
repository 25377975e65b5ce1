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

// Reference implementations used only by the tests. They are deliberately
// naive and share no code with the library beyond the Matrix container.

#ifndef SORTQ_TESTS_ORACLES_HPP
#define SORTQ_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "sortq/matrix.hpp"

namespace oracle {

using sortq::Matrix;

inline Matrix mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix transposed(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double fro(const Matrix& a) {
  double s = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

inline double fro_diff(const Matrix& a, const Matrix& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(s);
}

inline double rel(const Matrix& got, const Matrix& want) { return fro_diff(got, want) / std::max(fro(want), 1e-300); }

/// Gauss-Jordan inverse with partial pivoting.
inline Matrix inverse(Matrix a) {
  const std::size_t n = a.rows();
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(a(c, j), a(p, j));
      std::swap(inv(c, j), inv(p, j));
    }
    const double d = a(c, c);
    for (std::size_t j = 0; j < n; ++j) {
      a(c, j) /= d;
      inv(c, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      if (f == 0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

/// Cyclic Jacobi eigendecomposition: values (unsorted) and column eigenvectors.
inline std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix a) {
  const std::size_t n = a.rows();
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = a(i, i);
  return {w, v};
}

/// PSD square root through Jacobi.
inline Matrix sqrt_psd(const Matrix& c) {
  auto [w, v] = jacobi_eigen(c);
  const std::size_t n = c.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += v(i, k) * std::sqrt(std::max(w[k], 0.0)) * v(j, k);
      out(i, j) = s;
    }
  return out;
}

/// Singular values of m, descending, from the eigenvalues of m^T m.
inline std::vector<double> singular_values(const Matrix& m) {
  const Matrix g = m.rows() >= m.cols() ? mul(transposed(m), m) : mul(m, transposed(m));
  auto [w, v] = jacobi_eigen(g);
  for (double& x : w) x = std::sqrt(std::max(x, 0.0));
  std::sort(w.rbegin(), w.rend());
  return w;
}

/// diag(C (C + lambda I)^-1) by explicit inversion.
inline std::vector<double> ridge_leverage(const Matrix& c, double lambda) {
  Matrix shifted = c;
  for (std::size_t i = 0; i < c.rows(); ++i) shifted(i, i) += lambda;
  const Matrix p = mul(c, inverse(shifted));
  std::vector<double> d(c.rows());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = p(i, i);
  return d;
}

/// Selection sort by descending score; equal scores keep index order.
inline std::vector<std::size_t> argsort_desc(std::vector<double> s) {
  std::vector<std::size_t> idx(s.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < s.size(); ++j)
      if (s[j] > s[best]) best = j;
    // Rotate rather than swap so ties keep their relative order.
    std::rotate(s.begin() + i, s.begin() + best, s.begin() + best + 1);
    std::rotate(idx.begin() + i, idx.begin() + best, idx.begin() + best + 1);
  }
  return idx;
}

/// Softmax allocation with iterative cap redistribution.
inline std::vector<double> allocate(const std::vector<double>& s, double p, double eps, double cap) {
  const std::size_t n = s.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : s) mx = std::max(mx, -x / eps);
  std::vector<double> w(n);
  double z = 0;
  for (std::size_t i = 0; i < n; ++i) z += (w[i] = std::exp(-s[i] / eps - mx));
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = static_cast<double>(n) * p * w[i] / z;
  std::vector<bool> fixed(n, false);
  for (std::size_t iter = 0; iter < n; ++iter) {
    double excess = 0, free_mass = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!fixed[i] && r[i] > cap) {
        excess += r[i] - cap;
        r[i] = cap;
        fixed[i] = true;
      }
    }
    if (excess == 0) break;
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) free_mass += r[i];
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) r[i] += excess * r[i] / free_mass;
  }
  return r;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

/// X^T X / T for a random T x n sample: PSD, full rank when T >= n.
inline Matrix random_psd(std::size_t n, std::size_t t, std::mt19937_64& rng) {
  const Matrix x = random_matrix(t, n, rng);
  Matrix c = mul(transposed(x), x);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) /= static_cast<double>(t);
  return c;
}

}  // namespace oracle

#endif  // SORTQ_TESTS_ORACLES_HPP
