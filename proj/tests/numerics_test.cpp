// tests/numerics_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "ram/linalg.hpp"
#include "ram/matrix_io.hpp"
#include "ram/numerics.hpp"
#include "ram/rng.hpp"

namespace ram {
namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-3.0, 3.0);
  return m;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(3);
  const Matrix m = random_matrix(rng, 3, 4);
  EXPECT_EQ(matmul(Matrix::identity(3), m), m);
}

TEST(Matmul, HandCheckedTwoByTwo) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{1}, {1}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{3}, {7}}));
}

TEST(Matmul, BitIdenticalToTripleLoop) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Matrix a = random_matrix(rng, 7, 5);
    const Matrix b = random_matrix(rng, 5, 3);
    EXPECT_EQ(matmul(a, b), oracle::triple_loop_matmul(a, b)) << "seed " << seed;
  }
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
  Rng rng(11);
  const Matrix a = random_matrix(rng, 6, 4);
  const Matrix b = random_matrix(rng, 6, 3);
  const Matrix c = random_matrix(rng, 5, 4);
  EXPECT_LT(max_abs_diff(matmul_tn(a, b), matmul(a.transposed(), b)), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_nt(a, c), matmul(a, c.transposed())), 1e-12);
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ContractError);
}

TEST(Activation, ClosedForms) {
  const Matrix x = Matrix::from_rows({{0.0, -3.0, 3.0}});
  EXPECT_EQ(activation(Activation::kSigmoid, x)(0, 0), 0.5);
  const Matrix r = activation(Activation::kRelu, x);
  EXPECT_EQ(r(0, 1), 0.0);
  EXPECT_EQ(r(0, 2), 3.0);
}

TEST(Activation, TanhMatchesContinuedFraction) {
  EXPECT_NEAR(activation(Activation::kTanh, Matrix::from_rows({{1.0}}))(0, 0), 0.7615941559557649, 1e-12);
  for (double v = -6.0; v <= 6.0; v += 0.37)
    EXPECT_NEAR(apply_activation(Activation::kTanh, v), oracle::tanh_continued_fraction(v), 1e-12) << v;
}

TEST(Activation, SigmoidStaysFiniteAtExtremes) {
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Softmax, UniformRow) {
  const Matrix p = softmax_rows(Matrix(1, 3, 0.0));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(p(0, c), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  const Matrix p = softmax_rows(Matrix::from_rows({{1000.0, 1000.0}}));
  EXPECT_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(0, 1), 0.5);
}

TEST(Softmax, MatchesExtendedPrecision) {
  const Matrix p = softmax_rows(Matrix::from_rows({{1.0, 2.0, 3.0}}));
  const long double e1 = std::exp(1.0L), e2 = std::exp(2.0L), e3 = std::exp(3.0L);
  const long double z = e1 + e2 + e3;
  EXPECT_NEAR(p(0, 0), static_cast<double>(e1 / z), 1e-12);
  EXPECT_NEAR(p(0, 1), static_cast<double>(e2 / z), 1e-12);
  EXPECT_NEAR(p(0, 2), static_cast<double>(e3 / z), 1e-12);
}

TEST(Softmax, RowsSumToOneForArbitraryFiniteInput) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix x(3, 1 + rng.uniform_index(20));
    for (double& v : x.values()) v = rng.uniform(-1000.0, 1000.0);
    const Matrix p = softmax_rows(x);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (double v : p.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(CrossEntropy, PerfectPredictionIsZero) {
  const Matrix p = Matrix::from_rows({{1, 0, 0}, {0, 0, 1}});
  const std::vector<int> t{0, 2};
  EXPECT_EQ(cross_entropy(p, t), 0.0);
}

TEST(CrossEntropy, UniformIsLogClasses) {
  const Matrix p(5, 4, 0.25);
  const std::vector<int> t{0, 1, 2, 3, 0};
  EXPECT_NEAR(cross_entropy(p, t), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, MatchesScalarLoopAndIsNonNegative) {
  Rng rng(9);
  Matrix logits(10, 6);
  for (double& v : logits.values()) v = rng.normal();
  const Matrix p = softmax_rows(logits);
  std::vector<int> t(10);
  for (int& v : t) v = static_cast<int>(rng.uniform_index(6));
  double expected = 0.0;
  for (std::size_t r = 0; r < 10; ++r) expected -= std::log(p(r, static_cast<std::size_t>(t[r])));
  expected /= 10.0;
  EXPECT_NEAR(cross_entropy(p, t), expected, 1e-12);
  EXPECT_GT(cross_entropy(p, t), 0.0);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  const Matrix p = Matrix::from_rows({{1.0, 0.0}});
  const std::vector<int> t{1};
  EXPECT_NEAR(cross_entropy(p, t), -std::log(1e-30), 1e-9);
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  const Matrix p(1, 3, 1.0 / 3.0);
  EXPECT_THROW(cross_entropy(p, std::vector<int>{3}), ContractError);
  EXPECT_THROW(cross_entropy(p, std::vector<int>{-1}), ContractError);
}

TEST(Glorot, DeterministicForFixedSeed) {
  Rng a(1), b(1);
  EXPECT_EQ(init_glorot(a, 2, 2), init_glorot(b, 2, 2));
}

TEST(Glorot, LargeSampleIsCenteredAndBounded) {
  Rng rng(42);
  const Matrix m = init_glorot(rng, 1000, 1000);
  const double bound = std::sqrt(6.0 / 2000.0);
  double sum = 0.0;
  for (double v : m.values()) {
    EXPECT_LE(std::abs(v), bound);
    sum += v;
  }
  EXPECT_LT(std::abs(sum / static_cast<double>(m.size())), 0.01);
}

TEST(Rng, KnownXoshiroStream) {
  // Frozen from an independent Python transcription of SplitMix64 + xoshiro256**.
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0x99ec5f36cb75f2b4ULL);
  EXPECT_EQ(rng.next_u64(), 0xbf6e1f784956452aULL);
  EXPECT_EQ(rng.next_u64(), 0x1a5f849d4933e6e0ULL);
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformIndexStaysInRange) {
  Rng rng(77);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, NormalMoments) {
  Rng rng(123);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(MatrixIo, RoundTripIsBitExact) {
  Rng rng(4);
  const Matrix m = random_matrix(rng, 3, 5);
  std::stringstream ss;
  write_matrix(ss, m);
  EXPECT_EQ(ss.str().size(), 4u + 8u + 15u * 8u);
  EXPECT_EQ(ss.str().substr(0, 4), "RAM1");
  EXPECT_EQ(read_matrix(ss), m);
}

TEST(MatrixIo, LittleEndianHeader) {
  std::stringstream ss;
  write_matrix(ss, Matrix(2, 258));
  const std::string s = ss.str();
  EXPECT_EQ(static_cast<unsigned char>(s[4]), 2);
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(s[9]), 1);
}

TEST(MatrixIo, BadMagicAndTruncationThrow) {
  std::stringstream bad("RAM2xxxxxxxx");
  EXPECT_THROW(read_matrix(bad), IoError);
  std::stringstream ss;
  write_matrix(ss, Matrix(2, 2, 1.0));
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream truncated(s);
  EXPECT_THROW(read_matrix(truncated), IoError);
}

TEST(Linalg, CholeskySolvesSpdSystem) {
  const Matrix a = Matrix::from_rows({{4, 2, 0.4}, {2, 5, 1}, {0.4, 1, 3}});
  const Cholesky chol(a);
  const Vector b{1, 2, 3};
  const Vector x = chol.solve(b);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * x[k];
    EXPECT_NEAR(s, b[i], 1e-12);
  }
  EXPECT_NEAR(chol.log_determinant(), std::log(determinant(a)), 1e-12);
  EXPECT_THROW(Cholesky(Matrix::from_rows({{1, 2}, {2, 1}})), NumericError);
}

TEST(Linalg, LuDeterminantAndInverse) {
  const Matrix a = Matrix::from_rows({{0, 2, 1}, {1, 1, 0}, {3, 0, 1}});
  EXPECT_NEAR(determinant(a), 0 * (1 - 0) - 2 * (1 - 0) + 1 * (0 - 3), 1e-12);
  EXPECT_LT(max_abs_diff(matmul(a, inverse(a)), Matrix::identity(3)), 1e-12);
  EXPECT_TRUE(Lu(Matrix::from_rows({{1, 2}, {2, 4}})).singular());
}

TEST(Linalg, SymmetricEigenReconstructs) {
  Rng rng(8);
  Matrix b = random_matrix(rng, 5, 5);
  const Matrix a = matmul(b, b.transposed());
  const SymmetricEigen e = symmetric_eigen(a);
  Matrix diag(5, 5);
  for (std::size_t i = 0; i < 5; ++i) diag(i, i) = e.values[i];
  const Matrix rebuilt = matmul(matmul(e.vectors, diag), e.vectors.transposed());
  EXPECT_LT(max_abs_diff(rebuilt, a), 1e-9);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GE(e.values[i - 1], e.values[i]);
}

}  // namespace
}  // namespace ram
