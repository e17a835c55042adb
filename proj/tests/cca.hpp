// tests/cca.hpp

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

// Canonical correlations between two sets of row observations:
// singular values of Cxx^-1/2 Cxy Cyy^-1/2.

#ifndef RAM_TESTS_CCA_HPP_
#define RAM_TESTS_CCA_HPP_

#include <algorithm>
#include <cmath>

#include "ram/linalg.hpp"
#include "ram/matrix.hpp"
#include "ram/numerics.hpp"

namespace ram::testing {

inline Matrix centered(const Matrix& x) {
  const Vector mean = column_mean(x);
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) -= mean[c];
  return out;
}

inline Matrix inverse_sqrt(const Matrix& s) {
  const SymmetricEigen e = symmetric_eigen(s);
  const std::size_t n = s.rows();
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 1.0 / std::sqrt(std::max(e.values[k], 1e-12));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += e.vectors(i, k) * w * e.vectors(j, k);
  }
  return out;
}

/// min(p, q) canonical correlations, descending.
inline Vector canonical_correlations(const Matrix& x, const Matrix& y) {
  const Matrix xc = centered(x), yc = centered(y);
  const Matrix m = matmul(matmul(inverse_sqrt(matmul_tn(xc, xc)), matmul_tn(xc, yc)), inverse_sqrt(matmul_tn(yc, yc)));
  const SymmetricEigen e = symmetric_eigen(matmul_nt(m, m));
  Vector out;
  for (std::size_t k = 0; k < std::min(x.cols(), y.cols()); ++k) out.push_back(std::sqrt(std::max(e.values[k], 0.0)));
  return out;
}

inline double mean_canonical_correlation(const Matrix& x, const Matrix& y) {
  const Vector r = canonical_correlations(x, y);
  double s = 0.0;
  for (double v : r) s += v;
  return s / static_cast<double>(r.size());
}

}  // namespace ram::testing

#endif  // RAM_TESTS_CCA_HPP_
