// ram/optimizer.hpp

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

// First-order optimizers over a flat list of parameter matrices.
//
//   SGD with momentum:  v <- mu v - lr g;  theta <- theta + v
//   Adam:  m <- b1 m + (1-b1) g;  s <- b2 s + (1-b2) g^2
//          theta <- theta - lr (m / (1-b1^t)) / (sqrt(s / (1-b2^t)) + eps)

#ifndef RAM_OPTIMIZER_HPP_
#define RAM_OPTIMIZER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ram/error.hpp"
#include "ram/matrix.hpp"

namespace ram {

struct AdamConstants {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
};

/// Velocity (SGD) or first/second moments (Adam), shaped like the parameters.
struct OptimizerState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t step = 0;
};

namespace detail {

inline void check_shapes(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state,
                         bool need_second) {
  require(params.size() == grads.size(), "optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(params[i]->same_shape(grads[i]), "optimizer: parameter/gradient shape mismatch");
  if (state.first.empty()) {
    for (Matrix* p : params) state.first.emplace_back(p->rows(), p->cols());
  }
  if (need_second && state.second.empty()) {
    for (Matrix* p : params) state.second.emplace_back(p->rows(), p->cols());
  }
  require(state.first.size() == params.size(), "optimizer: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.first[i].same_shape(*params[i]), "optimizer: state shape mismatch");
    if (need_second) require(state.second[i].same_shape(*params[i]), "optimizer: state shape mismatch");
  }
}

}  // namespace detail

inline void sgd_momentum_step(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state,
                              double lr, double momentum) {
  detail::check_shapes(params, grads, state, false);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i]->data();
    double* v = state.first[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < params[i]->size(); ++k) {
      v[k] = momentum * v[k] - lr * g[k];
      theta[k] += v[k];
    }
  }
  ++state.step;
}

inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state,
                      double lr) {
  using C = AdamConstants;
  detail::check_shapes(params, grads, state, true);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(C::kBeta1, t);
  const double c2 = 1.0 - std::pow(C::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i]->data();
    double* m = state.first[i].data();
    double* s = state.second[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < params[i]->size(); ++k) {
      m[k] = C::kBeta1 * m[k] + (1.0 - C::kBeta1) * g[k];
      s[k] = C::kBeta2 * s[k] + (1.0 - C::kBeta2) * g[k] * g[k];
      theta[k] -= lr * (m[k] / c1) / (std::sqrt(s[k] / c2) + C::kEpsilon);
    }
  }
}

}  // namespace ram

#endif  // RAM_OPTIMIZER_HPP_
