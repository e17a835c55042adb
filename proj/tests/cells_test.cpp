// tests/cells_test.cpp

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
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "ram/cells.hpp"

namespace ram {
namespace {

using testing::check_gradients;
using testing::make_problem;
using testing::random_matrix;

const CellKind kAllKinds[] = {CellKind::kFfRelu, CellKind::kLstm, CellKind::kGru, CellKind::kReluGru,
                              CellKind::kMReluGru};
const CellKind kRecurrentKinds[] = {CellKind::kLstm, CellKind::kGru, CellKind::kReluGru, CellKind::kMReluGru};

oracle::ScalarGate scalar(const GateWeights& g) {
  return {oracle::to_grid(g.input), oracle::to_grid(g.recurrent), oracle::to_grid(g.bias)};
}

Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& e : v) e = scale * rng.normal();
  return v;
}

TEST(CellForward, MatchesScalarOracleForAllKinds) {
  for (CellKind kind : kRecurrentKinds) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto problem = make_problem(kind, 5, 8, 1, 100 + seed);
      Rng rng(seed);
      const Vector x = random_vector(rng, 5);
      CellState state = initial_state(kind, 8);
      state.h = random_vector(rng, 8, 0.5);
      if (kind == CellKind::kLstm) state.c = random_vector(rng, 8, 0.5);
      const auto [next, tape] = cell_forward(problem.layer, x, state);

      Vector expected_h, expected_c;
      if (kind == CellKind::kLstm) {
        const auto& p = std::get<LstmParams>(problem.layer.params);
        std::tie(expected_h, expected_c) = oracle::lstm_step(scalar(p.input_gate), scalar(p.forget_gate),
                                                             scalar(p.output_gate), scalar(p.candidate), x,
                                                             state.h, state.c);
      } else if (kind == CellKind::kMReluGru) {
        const auto& p = std::get<MGruParams>(problem.layer.params);
        expected_h = oracle::mgru_step(scalar(p.update_gate), scalar(p.candidate), x, state.h);
      } else {
        const auto& p = std::get<GruParams>(problem.layer.params);
        expected_h = oracle::gru_step(scalar(p.reset_gate), scalar(p.update_gate), scalar(p.candidate), x,
                                      state.h, kind == CellKind::kReluGru);
      }
      for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_NEAR(next.h[j], expected_h[j], 1e-12) << to_string(kind) << " seed " << seed;
        if (kind == CellKind::kLstm) {
          EXPECT_NEAR(next.c[j], expected_c[j], 1e-12);
        }
      }
    }
  }
}

TEST(CellForward, SequenceForwardAgreesWithStepwiseBitExactly) {
  for (CellKind kind : kAllKinds) {
    auto problem = make_problem(kind, 4, 6, 9, 7);
    SequenceTape tape;
    const Matrix h = sequence_forward(problem.layer, problem.inputs, &tape);
    CellState state = initial_state(kind, 6);
    for (std::size_t t = 0; t < 9; ++t) {
      auto [next, step] = cell_forward(problem.layer, problem.inputs.row(t), state);
      for (std::size_t j = 0; j < 6; ++j) ASSERT_EQ(next.h[j], h(t, j)) << to_string(kind);
      // Replaying from the tape reproduces the stored state exactly.
      CellState replay_state{tape[t].h_prev, tape[t].c_prev};
      auto [replayed, unused] = cell_forward(problem.layer, tape[t].input, replay_state);
      EXPECT_EQ(replayed.h, tape[t].h);
      EXPECT_EQ(replayed.c, tape[t].c);
      if (is_recurrent(kind)) state = next;
    }
  }
}

TEST(CellForward, LstmZeroParametersStayAtZero) {
  Rng rng(1);
  Layer layer = make_layer(CellKind::kLstm, 3, 4, rng);
  for_each_matrix(layer.params, [](Matrix& m) { m.fill(0.0); });
  CellState state = initial_state(CellKind::kLstm, 4);
  for (int t = 0; t < 20; ++t) {
    const Vector x = random_vector(rng, 3, 3.0);
    state = cell_forward(layer, x, state).first;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(state.c[j], 0.0);
      EXPECT_EQ(state.h[j], 0.0);
    }
  }
}

TEST(CellForward, LstmConstantErrorCarousel) {
  Rng rng(2);
  Layer layer = make_layer(CellKind::kLstm, 5, 8, rng);
  auto& p = std::get<LstmParams>(layer.params);
  p.forget_gate.bias.fill(50.0);
  p.input_gate.bias.fill(-50.0);
  CellState state = initial_state(CellKind::kLstm, 8);
  state.c = random_vector(rng, 8);
  for (int t = 0; t < 100; ++t) {
    const Vector x = random_vector(rng, 5);
    const CellState next = cell_forward(layer, x, state).first;
    for (std::size_t j = 0; j < 8; ++j) ASSERT_NEAR(next.c[j], state.c[j], 1e-6) << "t=" << t;
    state = next;
  }
}

TEST(CellForward, SaturatedUpdateGateCopiesState) {
  for (CellKind kind : {CellKind::kGru, CellKind::kReluGru, CellKind::kMReluGru}) {
    Rng rng(3);
    Layer layer = make_layer(kind, 5, 8, rng);
    if (kind == CellKind::kMReluGru) std::get<MGruParams>(layer.params).update_gate.bias.fill(-50.0);
    else std::get<GruParams>(layer.params).update_gate.bias.fill(-50.0);
    CellState state = initial_state(kind, 8);
    state.h = random_vector(rng, 8);
    for (int t = 0; t < 100; ++t) {
      const CellState next = cell_forward(layer, random_vector(rng, 5), state).first;
      for (std::size_t j = 0; j < 8; ++j) ASSERT_NEAR(next.h[j], state.h[j], 1e-6) << to_string(kind);
      state = next;
    }
  }
}

TEST(CellForward, GatesStayInOpenUnitInterval) {
  for (CellKind kind : kRecurrentKinds) {
    auto problem = make_problem(kind, 5, 8, 30, 17);
    problem.inputs *= 5.0;
    SequenceTape tape;
    sequence_forward(problem.layer, problem.inputs, &tape);
    for (const TapeStep& s : tape)
      for (const Vector* gate : {&s.input_gate, &s.forget_gate, &s.output_gate, &s.reset_gate, &s.update_gate})
        for (double g : *gate) {
          EXPECT_GT(g, 0.0);
          EXPECT_LT(g, 1.0);
        }
  }
}

TEST(CellForward, DimensionMismatchThrows) {
  Rng rng(4);
  const Layer layer = make_layer(CellKind::kGru, 3, 4, rng);
  EXPECT_THROW(cell_forward(layer, Vector(2, 0.0), initial_state(CellKind::kGru, 4)), ContractError);
  EXPECT_THROW(cell_forward(layer, Vector(3, 0.0), initial_state(CellKind::kGru, 5)), ContractError);
  Layer wrong = layer;
  wrong.kind = CellKind::kLstm;
  EXPECT_THROW(validate_layer(wrong), ContractError);
}

TEST(CellBackward, MatchesCentralDifferencesForAllKinds) {
  for (CellKind kind : kAllKinds) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto report = check_gradients(make_problem(kind, 5, 8, 7, seed));
      EXPECT_LT(report.max_relative_error, 1e-4) << to_string(kind) << " seed " << seed;
      EXPECT_GT(report.checked, 0u);
    }
  }
}

TEST(CellBackward, ZeroUpstreamGradientGivesZeroGradients) {
  for (CellKind kind : kAllKinds) {
    auto problem = make_problem(kind, 5, 8, 7, 21);
    SequenceTape tape;
    sequence_forward(problem.layer, problem.inputs, &tape);
    const LayerGradients g = cell_backward(problem.layer, tape, Matrix(7, 8));
    for_each_matrix(g.params, [](const Matrix& m) {
      for (double v : m.values()) EXPECT_EQ(v, 0.0);
    });
    for (double v : g.inputs.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(CellBackward, SingleStepGruMatchesHandDerivation) {
  // With h_prev = 0 the step is h = z * tanh(x W + b), z = sig(x Wz + bz);
  // the reset gate and every recurrent matrix receive no gradient.
  auto problem = make_problem(CellKind::kGru, 3, 4, 1, 5);
  SequenceTape tape;
  sequence_forward(problem.layer, problem.inputs, &tape);
  const LayerGradients g = cell_backward(problem.layer, tape, problem.probe);
  const auto& p = std::get<GruParams>(problem.layer.params);
  const auto& gp = std::get<GruParams>(g.params);

  for (std::size_t j = 0; j < 4; ++j) {
    double az = p.update_gate.bias(0, j), an = p.candidate.bias(0, j);
    for (std::size_t k = 0; k < 3; ++k) {
      az += problem.inputs(0, k) * p.update_gate.input(k, j);
      an += problem.inputs(0, k) * p.candidate.input(k, j);
    }
    const double z = 1.0 / (1.0 + std::exp(-az));
    const double n = std::tanh(an);
    const double up = problem.probe(0, j);
    const double d_an = up * z * (1.0 - n * n);
    const double d_az = up * n * z * (1.0 - z);
    EXPECT_NEAR(gp.candidate.bias(0, j), d_an, 1e-12);
    EXPECT_NEAR(gp.update_gate.bias(0, j), d_az, 1e-12);
    EXPECT_EQ(gp.reset_gate.bias(0, j), 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(gp.candidate.input(k, j), problem.inputs(0, k) * d_an, 1e-12);
      EXPECT_NEAR(gp.update_gate.input(k, j), problem.inputs(0, k) * d_az, 1e-12);
    }
  }
  for (const Matrix* m : {&gp.reset_gate.recurrent, &gp.update_gate.recurrent, &gp.candidate.recurrent})
    for (double v : m->values()) EXPECT_EQ(v, 0.0);
}

TEST(CellBackward, LengthMismatchThrows) {
  auto problem = make_problem(CellKind::kLstm, 5, 8, 7, 1);
  SequenceTape tape;
  sequence_forward(problem.layer, problem.inputs, &tape);
  EXPECT_THROW(cell_backward(problem.layer, tape, Matrix(6, 8)), ContractError);
  EXPECT_THROW(cell_backward(problem.layer, tape, Matrix(7, 7)), ContractError);
}

TEST(Dropout, IdentityWhenDisabled) {
  Rng rng(1);
  const Matrix x = random_matrix(rng, 4, 5, 1.0);
  EXPECT_EQ(dropout(rng, x, 0.0, true), x);
  EXPECT_EQ(dropout(rng, x, 0.9, false), x);
  EXPECT_THROW(dropout(rng, x, 1.0, true), ContractError);
}

TEST(Dropout, PreservesExpectation) {
  Rng rng(2);
  const Matrix ones(1000, 1000, 1.0);
  Matrix mask;
  const Matrix out = dropout(rng, ones, 0.2, true, &mask);
  double sum = 0.0;
  std::size_t zeros = 0;
  for (double v : out.values()) {
    sum += v;
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.25);
    }
  }
  EXPECT_NEAR(sum / 1e6, 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / 1e6, 0.2, 0.005);
  EXPECT_EQ(mask, out);
}

TEST(FfLayer, DegenerateCases) {
  Rng rng(3);
  const Matrix x = random_matrix(rng, 5, 4, 1.0);
  const Matrix zero = ff_layer_forward(Matrix(4, 3), Matrix(1, 3), x);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  Matrix positive = x;
  for (double& v : positive.values()) v = std::abs(v) + 0.1;
  EXPECT_EQ(ff_layer_forward(Matrix::identity(4), Matrix(1, 4), positive), positive);
}

TEST(FfLayer, MatchesScalarLoop) {
  Rng rng(4);
  const Matrix x = random_matrix(rng, 6, 5, 1.0);
  const Matrix w = random_matrix(rng, 5, 7, 1.0);
  const Matrix b = random_matrix(rng, 1, 7, 1.0);
  const Matrix out = ff_layer_forward(w, b, x);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      double s = b(0, c);
      for (std::size_t k = 0; k < 5; ++k) s += x(r, k) * w(k, c);
      EXPECT_NEAR(out(r, c), s > 0 ? s : 0.0, 1e-12);
    }
  EXPECT_THROW(ff_layer_forward(w, b, Matrix(2, 4)), ContractError);
}

TEST(MakeLayer, ForgetBiasStartsAtOne) {
  Rng rng(5);
  const Layer layer = make_layer(CellKind::kLstm, 3, 4, rng);
  const auto& p = std::get<LstmParams>(layer.params);
  for (double v : p.forget_gate.bias.values()) EXPECT_EQ(v, 1.0);
  for (double v : p.input_gate.bias.values()) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace ram
