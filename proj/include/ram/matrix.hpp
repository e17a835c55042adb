// ram/matrix.hpp

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

#ifndef RAM_MATRIX_HPP_
#define RAM_MATRIX_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "ram/error.hpp"

namespace ram {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Element (r, c) lives at data[r * cols + c].
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Matrix: data length != rows * cols");
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      require(row.size() == c, "Matrix::from_rows: ragged rows");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  /// 1 x n matrix holding a copy of v.
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Vector row_copy(std::size_t r) const {
    auto s = row(r);
    return Vector(s.begin(), s.end());
  }

  void set_row(std::size_t r, std::span<const double> v) {
    require(v.size() == cols_, "Matrix::set_row: length mismatch");
    std::copy(v.begin(), v.end(), row(r).begin());
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Matrix& operator+=(const Matrix& o) {
    require(same_shape(o), "Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Matrix& operator-=(const Matrix& o) {
    require(same_shape(o), "Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }

  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  /// this += alpha * o
  void add_scaled(const Matrix& o, double alpha) {
    require(same_shape(o), "Matrix::add_scaled: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * o.data_[i];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }

/// Largest absolute elementwise difference; shapes must agree.
inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Vertical concatenation of matrices with equal column count.
inline Matrix vstack(std::span<const Matrix> parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.empty() ? 0 : parts.front().cols();
  for (const Matrix& p : parts) {
    require(p.cols() == cols || p.rows() == 0, "vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const Matrix& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data() + r * cols);
    r += p.rows();
  }
  return out;
}

inline Matrix row_slice(const Matrix& m, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= m.rows(), "row_slice: range out of bounds");
  Matrix out(end - begin, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + end * m.cols(), out.data());
  return out;
}

inline Vector column_mean(const Matrix& m) {
  require(m.rows() > 0, "column_mean: empty matrix");
  Vector mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

}  // namespace ram

#endif  // RAM_MATRIX_HPP_
