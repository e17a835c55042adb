// ram/numerics.hpp

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

// Dense kernels shared by every module.
//
// Summation order is fixed: every output element of a product is accumulated
// from 0.0 over the shared index k in increasing order, with no fused
// multiply-add. Loops are written i-k-j for locality, which yields the same
// per-element sequence of additions as the textbook k-inner triple loop.

#ifndef RAM_NUMERICS_HPP_
#define RAM_NUMERICS_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "ram/error.hpp"
#include "ram/matrix.hpp"
#include "ram/rng.hpp"

namespace ram {

namespace detail {

inline void check_finite(const Matrix& m, const char* where) {
  if (!m.all_finite()) throw NumericError(std::string(where) + ": non-finite result");
}

}  // namespace detail

/// out += a * b, no shape checks.
inline void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* out_row = out.data() + i * m;
    const double* a_row = a.data() + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a_row[k];
      const double* b_row = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aik * b_row[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: a.cols != b.rows");
  Matrix out(a.rows(), b.cols());
  matmul_accumulate(a, b, out);
  detail::check_finite(out, "matmul");
  return out;
}

/// a^T * b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: row count mismatch");
  const std::size_t inner = a.rows(), n = a.cols(), m = b.cols();
  Matrix out(n, m);
  for (std::size_t k = 0; k < inner; ++k) {
    const double* a_row = a.data() + k * n;
    const double* b_row = b.data() + k * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      double* out_row = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

/// a * b^T.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: column count mismatch");
  const std::size_t n = a.rows(), m = b.rows(), inner = a.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a_row = a.data() + i * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const double* b_row = b.data() + j * inner;
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += a_row[k] * b_row[k];
      out(i, j) = s;
    }
  }
  return out;
}

/// out[j] += sum_k v[k] * m(k, j); the row-vector times matrix kernel used per timestep.
inline void vecmat_accumulate(std::span<const double> v, const Matrix& m, std::span<double> out) {
  const std::size_t cols = m.cols();
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double vk = v[k];
    const double* m_row = m.data() + k * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += vk * m_row[j];
  }
}

/// out[k] += sum_j v[j] * m(k, j); multiplies by the transpose.
inline void vecmat_t_accumulate(std::span<const double> v, const Matrix& m, std::span<double> out) {
  const std::size_t cols = m.cols();
  for (std::size_t k = 0; k < m.rows(); ++k) {
    const double* m_row = m.data() + k * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += v[j] * m_row[j];
    out[k] += s;
  }
}

enum class Activation { kSigmoid, kTanh, kRelu };

inline double sigmoid(double v) {
  // Split by sign so exp never overflows.
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

inline double apply_activation(Activation kind, double v) {
  switch (kind) {
    case Activation::kSigmoid: return sigmoid(v);
    case Activation::kTanh: return std::tanh(v);
    case Activation::kRelu: return relu(v);
  }
  return v;
}

inline Matrix activation(Activation kind, const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = apply_activation(kind, v);
  return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

inline constexpr double kProbabilityFloor = 1e-30;

/// Mean over rows of -log p(target); probabilities are clamped at 1e-30.
inline double cross_entropy(const Matrix& probs, std::span<const int> targets) {
  require(targets.size() == probs.rows(), "cross_entropy: one target per row required");
  require(probs.rows() > 0, "cross_entropy: empty input");
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= probs.cols())
      throw ContractError("cross_entropy: label " + std::to_string(t) + " out of range");
    total += -std::log(std::max(probs(r, static_cast<std::size_t>(t)), kProbabilityFloor));
  }
  return total / static_cast<double>(probs.rows());
}

/// Glorot/Xavier uniform on +-sqrt(6 / (rows + cols)).
inline Matrix init_glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  require(rows >= 1 && cols >= 1, "init_glorot: dimensions must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace ram

#endif  // RAM_NUMERICS_HPP_
