// ram/linalg.hpp

// Copyright 2026 The ram Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small dense factorizations for the i-vector, fMLLR and evaluation code.
// Sizes here are tens of rows at most, so plain O(n^3) loops are fine.

#ifndef RAM_LINALG_HPP_
#define RAM_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ram/error.hpp"
#include "ram/matrix.hpp"

namespace ram {

/// Lower-triangular Cholesky factor L with a = L L^T.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : l_(a.rows(), a.rows()) {
    require(a.rows() == a.cols(), "Cholesky: matrix must be square");
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
      double d = a(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
      if (!(d > 0.0)) throw NumericError("Cholesky: matrix is not positive definite");
      const double ljj = std::sqrt(d);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / ljj;
      }
    }
  }

  const Matrix& factor() const { return l_; }

  Vector solve(std::span<const double> b) const {
    const std::size_t n = l_.rows();
    require(b.size() == n, "Cholesky::solve: length mismatch");
    Vector y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) y[i] -= l_(i, k) * y[k];
      y[i] /= l_(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t k = i + 1; k < n; ++k) y[i] -= l_(k, i) * y[k];
      y[i] /= l_(i, i);
    }
    return y;
  }

  Matrix inverse() const {
    const std::size_t n = l_.rows();
    Matrix inv(n, n);
    Vector e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      std::fill(e.begin(), e.end(), 0.0);
      e[c] = 1.0;
      Vector x = solve(e);
      for (std::size_t r = 0; r < n; ++r) inv(r, c) = x[r];
    }
    return inv;
  }

  double log_determinant() const {
    double s = 0.0;
    for (std::size_t i = 0; i < l_.rows(); ++i) s += std::log(l_(i, i));
    return 2.0 * s;
  }

 private:
  Matrix l_;
};

/// LU decomposition with partial pivoting, P a = L U.
class Lu {
 public:
  explicit Lu(const Matrix& a) : lu_(a), perm_(a.rows()) {
    require(a.rows() == a.cols(), "Lu: matrix must be square");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
      if (lu_(p, k) == 0.0) {
        singular_ = true;
        continue;
      }
      if (p != k) {
        for (std::size_t c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(p, c));
        std::swap(perm_[k], perm_[p]);
        sign_ = -sign_;
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        lu_(i, k) /= lu_(k, k);
        const double f = lu_(i, k);
        for (std::size_t c = k + 1; c < n; ++c) lu_(i, c) -= f * lu_(k, c);
      }
    }
  }

  bool singular() const { return singular_; }

  double determinant() const {
    if (singular_) return 0.0;
    double d = sign_;
    for (std::size_t i = 0; i < lu_.rows(); ++i) d *= lu_(i, i);
    return d;
  }

  Vector solve(std::span<const double> b) const {
    if (singular_) throw NumericError("Lu::solve: singular matrix");
    const std::size_t n = lu_.rows();
    require(b.size() == n, "Lu::solve: length mismatch");
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < i; ++k) x[i] -= lu_(i, k) * x[k];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t k = i + 1; k < n; ++k) x[i] -= lu_(i, k) * x[k];
      x[i] /= lu_(i, i);
    }
    return x;
  }

  Matrix inverse() const {
    const std::size_t n = lu_.rows();
    Matrix inv(n, n);
    Vector e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      std::fill(e.begin(), e.end(), 0.0);
      e[c] = 1.0;
      Vector x = solve(e);
      for (std::size_t r = 0; r < n; ++r) inv(r, c) = x[r];
    }
    return inv;
  }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
  double sign_ = 1.0;
  bool singular_ = false;
};

inline double determinant(const Matrix& a) { return Lu(a).determinant(); }

inline Matrix inverse(const Matrix& a) { return Lu(a).inverse(); }

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]
};

/// Cyclic Jacobi rotations for a symmetric matrix.
inline SymmetricEigen symmetric_eigen(const Matrix& a, int max_sweeps = 100) {
  require(a.rows() == a.cols(), "symmetric_eigen: matrix must be square");
  const std::size_t n = a.rows();
  Matrix m = a;
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (m(p, q) == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return m(x, x) > m(y, y); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = m(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
  }
  return out;
}

}  // namespace ram

#endif  // RAM_LINALG_HPP_
