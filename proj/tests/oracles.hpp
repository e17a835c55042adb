// tests/oracles.hpp

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

// Reference implementations used only by tests. Nothing here may call the
// library routine it is checking; these are deliberately naive.

#ifndef RAM_TESTS_ORACLES_HPP_
#define RAM_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ram/matrix.hpp"

namespace ram::oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
  return g;
}

/// Textbook triple loop, k innermost.
inline Matrix triple_loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

/// Lambert's continued fraction tanh x = x / (1 + x^2 / (3 + x^2 / (5 + ...))).
inline double tanh_continued_fraction(double x, int depth = 60) {
  const long double x2 = static_cast<long double>(x) * x;
  long double tail = 2.0L * depth + 1.0L;
  for (int k = depth - 1; k >= 0; --k) tail = (2.0L * k + 1.0L) + x2 / tail;
  return static_cast<double>(static_cast<long double>(x) / tail);
}

inline double scalar_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Scalar gate pre-activation: sum_k x_k Wx[k][j] + sum_k h_k Wh[k][j] + b_j.
inline double pre(const Grid& wx, const Grid& wh, const Grid& b, const std::vector<double>& x,
                  const std::vector<double>& h, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * wx[k][j];
  for (std::size_t k = 0; k < h.size(); ++k) s += h[k] * wh[k][j];
  return s + b[0][j];
}

struct ScalarGate {
  Grid wx, wh, b;
};

/// One LSTM step written element by element. Returns (h, c).
inline std::pair<std::vector<double>, std::vector<double>> lstm_step(
    const ScalarGate& gi, const ScalarGate& gf, const ScalarGate& go, const ScalarGate& gc,
    const std::vector<double>& x, const std::vector<double>& h, const std::vector<double>& c) {
  const std::size_t n = h.size();
  std::vector<double> h_new(n), c_new(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double i = scalar_sigmoid(pre(gi.wx, gi.wh, gi.b, x, h, j));
    const double f = scalar_sigmoid(pre(gf.wx, gf.wh, gf.b, x, h, j));
    const double o = scalar_sigmoid(pre(go.wx, go.wh, go.b, x, h, j));
    const double g = tanh_continued_fraction(pre(gc.wx, gc.wh, gc.b, x, h, j));
    c_new[j] = f * c[j] + i * g;
    h_new[j] = o * tanh_continued_fraction(c_new[j]);
  }
  return {h_new, c_new};
}

/// One GRU step; relu_candidate selects the reluGRU variant.
inline std::vector<double> gru_step(const ScalarGate& gr, const ScalarGate& gz, const ScalarGate& gn,
                                    const std::vector<double>& x, const std::vector<double>& h,
                                    bool relu_candidate) {
  const std::size_t n = h.size();
  std::vector<double> rh(n);
  for (std::size_t j = 0; j < n; ++j) rh[j] = scalar_sigmoid(pre(gr.wx, gr.wh, gr.b, x, h, j)) * h[j];
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double z = scalar_sigmoid(pre(gz.wx, gz.wh, gz.b, x, h, j));
    const double a = pre(gn.wx, gn.wh, gn.b, x, rh, j);
    const double cand = relu_candidate ? (a > 0 ? a : 0.0) : tanh_continued_fraction(a);
    out[j] = (1.0 - z) * h[j] + z * cand;
  }
  return out;
}

inline std::vector<double> mgru_step(const ScalarGate& gz, const ScalarGate& gn, const std::vector<double>& x,
                                     const std::vector<double>& h) {
  const std::size_t n = h.size();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double z = scalar_sigmoid(pre(gz.wx, gz.wh, gz.b, x, h, j));
    const double a = pre(gn.wx, gn.wh, gn.b, x, h, j);
    out[j] = (1.0 - z) * h[j] + z * (a > 0 ? a : 0.0);
  }
  return out;
}

/// Scalar SGD-with-momentum trajectory for a constant gradient.
inline std::vector<double> sgd_trajectory(double theta, double g, double lr, double mu, int steps) {
  std::vector<double> out;
  double v = 0.0;
  for (int k = 0; k < steps; ++k) {
    v = mu * v - lr * g;
    theta = theta + v;
    out.push_back(theta);
  }
  return out;
}

/// Scalar Adam written from the published update rule.
inline std::vector<double> adam_trajectory(double theta, const std::vector<double>& grads, double lr) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0, p1 = 1.0, p2 = 1.0;
  std::vector<double> out;
  for (double g : grads) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    p1 *= b1;
    p2 *= b2;
    const double mhat = m / (1 - p1);
    const double vhat = v / (1 - p2);
    theta = theta - lr * mhat / (std::sqrt(vhat) + eps);
    out.push_back(theta);
  }
  return out;
}

/// Exhaustive enumeration of every HMM path for P phones of S states each
/// (state id j * S + k). Scores accumulate in the same order as a forward
/// recursion: ((score + arc) + emission). Keeps every phone sequence that
/// attains the best score.
struct BruteForceDecode {
  double best = -INFINITY;
  std::vector<std::vector<int>> best_sequences;
};

inline BruteForceDecode brute_force_decode(const Grid& emission, std::size_t phones, std::size_t states_per_phone,
                                           const std::vector<double>& init, const Grid& bigram, double lm_weight,
                                           double self_loop) {
  BruteForceDecode out;
  const std::size_t steps = emission.size();
  const double stay = std::log(self_loop), move = std::log(1.0 - self_loop);
  auto lm = [&](double v) { return lm_weight == 0.0 ? 0.0 : lm_weight * v; };
  std::vector<int> seq;
  auto consider = [&](double score) {
    if (score > out.best) {
      out.best = score;
      out.best_sequences = {seq};
    } else if (score == out.best && score > -INFINITY) {
      out.best_sequences.push_back(seq);
    }
  };
  // Recursive walk over (time, phone, state-in-phone).
  auto walk = [&](auto&& self, std::size_t t, std::size_t j, std::size_t k, double score) -> void {
    if (t + 1 == steps) {
      if (k + 1 == states_per_phone) consider(score);
      return;
    }
    const double* e = emission[t + 1].data();
    self(self, t + 1, j, k, (score + stay) + e[j * states_per_phone + k]);
    if (k + 1 < states_per_phone) {
      self(self, t + 1, j, k + 1, (score + move) + e[j * states_per_phone + k + 1]);
    } else {
      for (std::size_t i = 0; i < phones; ++i) {
        seq.push_back(static_cast<int>(i));
        self(self, t + 1, i, 0, (score + move + lm(bigram[j][i])) + e[i * states_per_phone]);
        seq.pop_back();
      }
    }
  };
  if (steps == 0) return out;
  for (std::size_t j = 0; j < phones; ++j) {
    seq = {static_cast<int>(j)};
    walk(walk, 0, j, 0, lm(init[j]) + emission[0][j * states_per_phone]);
  }
  return out;
}

/// Levenshtein distance by plain recursion with memoization.
class EditDistance {
 public:
  EditDistance(const std::vector<std::string>& a, const std::vector<std::string>& b) : a_(a), b_(b) {}

  int operator()() { return solve(a_.size(), b_.size()); }

 private:
  int solve(std::size_t i, std::size_t j) {
    if (i == 0) return static_cast<int>(j);
    if (j == 0) return static_cast<int>(i);
    auto key = std::make_pair(i, j);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const int sub = solve(i - 1, j - 1) + (a_[i - 1] == b_[j - 1] ? 0 : 1);
    const int del = solve(i - 1, j) + 1;
    const int ins = solve(i, j - 1) + 1;
    const int best = std::min(sub, std::min(del, ins));
    memo_[key] = best;
    return best;
  }

  const std::vector<std::string>& a_;
  const std::vector<std::string>& b_;
  std::map<std::pair<std::size_t, std::size_t>, int> memo_;
};

}  // namespace ram::oracle

#endif  // RAM_TESTS_ORACLES_HPP_
