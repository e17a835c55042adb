// ram/cells.hpp

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

// Recurrent cells and the feed-forward ReLU layer, forward and BPTT backward.
//
// Row-vector convention: a frame x is 1 x in, weights are in x hidden, so a
// gate pre-activation is  a = x Wx + h_prev Wh + b.
//
//   LSTM (no peepholes, no cell clipping)
//     i = sig(a_i)   f = sig(a_f)   o = sig(a_o)   g = tanh(a_g)
//     c = f * c_prev + i * g
//     h = o * tanh(c)
//
//   GRU / reluGRU (act = tanh or ReLU)
//     r = sig(a_r)   z = sig(a_z)
//     n = act(x W + (r * h_prev) U + b)
//     h = (1 - z) * h_prev + z * n
//
//   M-reluGRU (no reset gate)
//     z = sig(a_z)
//     n = relu(x W + h_prev U + b)
//     h = (1 - z) * h_prev + z * n
//
//   FF ReLU:  h = relu(x W + b)
//
// '*' is the elementwise product. BPTT runs over the whole sequence.

#ifndef RAM_CELLS_HPP_
#define RAM_CELLS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "ram/error.hpp"
#include "ram/matrix.hpp"
#include "ram/numerics.hpp"
#include "ram/rng.hpp"

namespace ram {

enum class CellKind : std::uint32_t {
  kFfRelu = 0,
  kLstm = 1,
  kGru = 2,
  kReluGru = 3,
  kMReluGru = 4,
};

inline std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::kFfRelu: return "ff";
    case CellKind::kLstm: return "lstm";
    case CellKind::kGru: return "gru";
    case CellKind::kReluGru: return "relugru";
    case CellKind::kMReluGru: return "mrelugru";
  }
  return "?";
}

inline CellKind parse_cell_kind(std::string_view name) {
  if (name == "ff") return CellKind::kFfRelu;
  if (name == "lstm") return CellKind::kLstm;
  if (name == "gru") return CellKind::kGru;
  if (name == "relugru") return CellKind::kReluGru;
  if (name == "mrelugru") return CellKind::kMReluGru;
  throw ContractError("unknown architecture '" + std::string(name) + "'");
}

inline bool is_recurrent(CellKind kind) { return kind != CellKind::kFfRelu; }

/// Weights feeding one gate (or the candidate): input side, recurrent side, bias.
struct GateWeights {
  Matrix input;      // in x hidden
  Matrix recurrent;  // hidden x hidden
  Matrix bias;       // 1 x hidden

  template <class F> void visit(F&& f) { f(input); f(recurrent); f(bias); }
  template <class F> void visit(F&& f) const { f(input); f(recurrent); f(bias); }
};

struct FfParams {
  Matrix weights;  // in x hidden
  Matrix bias;     // 1 x hidden

  template <class F> void visit(F&& f) { f(weights); f(bias); }
  template <class F> void visit(F&& f) const { f(weights); f(bias); }
};

struct LstmParams {
  GateWeights input_gate, forget_gate, output_gate, candidate;

  template <class F> void visit(F&& f) {
    input_gate.visit(f); forget_gate.visit(f); output_gate.visit(f); candidate.visit(f);
  }
  template <class F> void visit(F&& f) const {
    input_gate.visit(f); forget_gate.visit(f); output_gate.visit(f); candidate.visit(f);
  }
};

/// Shared by GRU and reluGRU; the kind tag picks the candidate activation.
struct GruParams {
  GateWeights reset_gate, update_gate, candidate;

  template <class F> void visit(F&& f) { reset_gate.visit(f); update_gate.visit(f); candidate.visit(f); }
  template <class F> void visit(F&& f) const { reset_gate.visit(f); update_gate.visit(f); candidate.visit(f); }
};

struct MGruParams {
  GateWeights update_gate, candidate;

  template <class F> void visit(F&& f) { update_gate.visit(f); candidate.visit(f); }
  template <class F> void visit(F&& f) const { update_gate.visit(f); candidate.visit(f); }
};

using LayerParams = std::variant<FfParams, LstmParams, GruParams, MGruParams>;

/// Visits every matrix of a parameter set in the fixed serialization order.
template <class F>
void for_each_matrix(LayerParams& params, F&& f) {
  std::visit([&](auto& p) { p.visit(f); }, params);
}

template <class F>
void for_each_matrix(const LayerParams& params, F&& f) {
  std::visit([&](const auto& p) { p.visit(f); }, params);
}

/// Same shapes as `params`, all zeros.
inline LayerParams zeros_like(const LayerParams& params) {
  LayerParams out = params;
  for_each_matrix(out, [](Matrix& m) { m.fill(0.0); });
  return out;
}

struct Layer {
  CellKind kind = CellKind::kFfRelu;
  LayerParams params;

  std::size_t input_dim() const {
    return std::visit(
        [](const auto& p) -> std::size_t {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, FfParams>) return p.weights.rows();
          else return p.candidate.input.rows();
        },
        params);
  }

  std::size_t hidden_dim() const {
    return std::visit(
        [](const auto& p) -> std::size_t {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, FfParams>) return p.weights.cols();
          else return p.candidate.input.cols();
        },
        params);
  }
};

namespace detail {

inline void check_gate(const GateWeights& g, std::size_t in, std::size_t hidden) {
  require(g.input.rows() == in && g.input.cols() == hidden, "gate input weights: shape mismatch");
  require(g.recurrent.rows() == hidden && g.recurrent.cols() == hidden,
          "gate recurrent weights must be hidden x hidden");
  require(g.bias.rows() == 1 && g.bias.cols() == hidden, "gate bias must be 1 x hidden");
}

inline GateWeights make_gate(Rng& rng, std::size_t in, std::size_t hidden, double bias) {
  return GateWeights{init_glorot(rng, in, hidden), init_glorot(rng, hidden, hidden), Matrix(1, hidden, bias)};
}

}  // namespace detail

/// Throws ContractError unless the variant alternative matches the kind and all shapes agree.
inline void validate_layer(const Layer& layer) {
  const std::size_t in = layer.input_dim(), hidden = layer.hidden_dim();
  switch (layer.kind) {
    case CellKind::kFfRelu: {
      const auto* p = std::get_if<FfParams>(&layer.params);
      require(p != nullptr, "FF layer needs FfParams");
      require(p->bias.rows() == 1 && p->bias.cols() == hidden, "FF bias must be 1 x hidden");
      break;
    }
    case CellKind::kLstm: {
      const auto* p = std::get_if<LstmParams>(&layer.params);
      require(p != nullptr, "LSTM layer needs LstmParams");
      for (const GateWeights* g : {&p->input_gate, &p->forget_gate, &p->output_gate, &p->candidate})
        detail::check_gate(*g, in, hidden);
      break;
    }
    case CellKind::kGru:
    case CellKind::kReluGru: {
      const auto* p = std::get_if<GruParams>(&layer.params);
      require(p != nullptr, "GRU layer needs GruParams");
      for (const GateWeights* g : {&p->reset_gate, &p->update_gate, &p->candidate})
        detail::check_gate(*g, in, hidden);
      break;
    }
    case CellKind::kMReluGru: {
      const auto* p = std::get_if<MGruParams>(&layer.params);
      require(p != nullptr, "M-reluGRU layer needs MGruParams");
      for (const GateWeights* g : {&p->update_gate, &p->candidate}) detail::check_gate(*g, in, hidden);
      break;
    }
  }
}

/// Glorot-uniform weights, zero biases, LSTM forget-gate bias +1.
inline Layer make_layer(CellKind kind, std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  require(input_dim >= 1 && hidden_dim >= 1, "make_layer: dimensions must be positive");
  Layer layer{kind, FfParams{}};
  switch (kind) {
    case CellKind::kFfRelu:
      layer.params = FfParams{init_glorot(rng, input_dim, hidden_dim), Matrix(1, hidden_dim)};
      break;
    case CellKind::kLstm: {
      LstmParams p;
      p.input_gate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      p.forget_gate = detail::make_gate(rng, input_dim, hidden_dim, 1.0);
      p.output_gate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      p.candidate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      layer.params = std::move(p);
      break;
    }
    case CellKind::kGru:
    case CellKind::kReluGru: {
      GruParams p;
      p.reset_gate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      p.update_gate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      p.candidate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      layer.params = std::move(p);
      break;
    }
    case CellKind::kMReluGru: {
      MGruParams p;
      p.update_gate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      p.candidate = detail::make_gate(rng, input_dim, hidden_dim, 0.0);
      layer.params = std::move(p);
      break;
    }
  }
  return layer;
}

struct CellState {
  Vector h;
  Vector c;  // LSTM only, empty otherwise
};

inline CellState initial_state(CellKind kind, std::size_t hidden_dim) {
  CellState s{Vector(hidden_dim, 0.0), {}};
  if (kind == CellKind::kLstm) s.c.assign(hidden_dim, 0.0);
  return s;
}

/// Everything one timestep needs for an exact backward pass. Fields a kind
/// does not use stay empty.
struct TapeStep {
  Vector input;
  Vector h_prev;
  Vector c_prev;
  Vector input_gate, forget_gate, output_gate;  // LSTM
  Vector reset_gate;                            // GRU, reluGRU
  Vector update_gate;                           // GRU family
  Vector reset_hidden;                          // r * h_prev
  Vector candidate_pre;                         // candidate pre-activation (FF: layer pre-activation)
  Vector candidate;                             // g (LSTM) or n (GRU family)
  Vector c, tanh_c;                             // LSTM
  Vector h;
};

namespace detail {

/// Projection of one input frame through a gate's input weights (same
/// summation order as a row of matmul(X, W)).
inline Vector project_input(const Matrix& w, std::span<const double> x) {
  Vector out(w.cols(), 0.0);
  vecmat_accumulate(x, w, out);
  return out;
}

/// pre[j] = (xproj[j] + (h U)[j]) + b[j]
inline Vector gate_pre(const GateWeights& g, std::span<const double> xproj, std::span<const double> h) {
  const std::size_t n = g.bias.cols();
  Vector hu(n, 0.0);
  vecmat_accumulate(h, g.recurrent, hu);
  Vector pre(n);
  for (std::size_t j = 0; j < n; ++j) pre[j] = (xproj[j] + hu[j]) + g.bias(0, j);
  return pre;
}

inline Vector apply(Vector v, double (*fn)(double)) {
  for (double& e : v) e = fn(e);
  return v;
}

inline double tanh_fn(double v) { return std::tanh(v); }

/// Forward one step given the input projections of every gate, in visit order.
inline TapeStep step_from_projections(const Layer& layer, std::span<const double> x,
                                      std::span<const Vector> proj, const CellState& state) {
  TapeStep s;
  s.input.assign(x.begin(), x.end());
  s.h_prev = state.h;
  const std::size_t n = layer.hidden_dim();
  switch (layer.kind) {
    case CellKind::kFfRelu: {
      const auto& p = std::get<FfParams>(layer.params);
      s.candidate_pre.resize(n);
      for (std::size_t j = 0; j < n; ++j) s.candidate_pre[j] = proj[0][j] + p.bias(0, j);
      s.h = apply(s.candidate_pre, relu);
      break;
    }
    case CellKind::kLstm: {
      const auto& p = std::get<LstmParams>(layer.params);
      s.c_prev = state.c;
      s.input_gate = apply(gate_pre(p.input_gate, proj[0], state.h), sigmoid);
      s.forget_gate = apply(gate_pre(p.forget_gate, proj[1], state.h), sigmoid);
      s.output_gate = apply(gate_pre(p.output_gate, proj[2], state.h), sigmoid);
      s.candidate_pre = gate_pre(p.candidate, proj[3], state.h);
      s.candidate = apply(s.candidate_pre, tanh_fn);
      s.c.resize(n);
      s.tanh_c.resize(n);
      s.h.resize(n);
      for (std::size_t j = 0; j < n; ++j) {
        s.c[j] = s.forget_gate[j] * state.c[j] + s.input_gate[j] * s.candidate[j];
        s.tanh_c[j] = std::tanh(s.c[j]);
        s.h[j] = s.output_gate[j] * s.tanh_c[j];
      }
      break;
    }
    case CellKind::kGru:
    case CellKind::kReluGru: {
      const auto& p = std::get<GruParams>(layer.params);
      s.reset_gate = apply(gate_pre(p.reset_gate, proj[0], state.h), sigmoid);
      s.update_gate = apply(gate_pre(p.update_gate, proj[1], state.h), sigmoid);
      s.reset_hidden.resize(n);
      for (std::size_t j = 0; j < n; ++j) s.reset_hidden[j] = s.reset_gate[j] * state.h[j];
      s.candidate_pre = gate_pre(p.candidate, proj[2], s.reset_hidden);
      s.candidate = apply(s.candidate_pre, layer.kind == CellKind::kGru ? tanh_fn : relu);
      s.h.resize(n);
      for (std::size_t j = 0; j < n; ++j)
        s.h[j] = (1.0 - s.update_gate[j]) * state.h[j] + s.update_gate[j] * s.candidate[j];
      break;
    }
    case CellKind::kMReluGru: {
      const auto& p = std::get<MGruParams>(layer.params);
      s.update_gate = apply(gate_pre(p.update_gate, proj[0], state.h), sigmoid);
      s.candidate_pre = gate_pre(p.candidate, proj[1], state.h);
      s.candidate = apply(s.candidate_pre, relu);
      s.h.resize(n);
      for (std::size_t j = 0; j < n; ++j)
        s.h[j] = (1.0 - s.update_gate[j]) * state.h[j] + s.update_gate[j] * s.candidate[j];
      break;
    }
  }
  return s;
}

/// Input-side weight matrices in the order step_from_projections expects.
inline std::vector<const Matrix*> input_weights(const Layer& layer) {
  return std::visit(
      [](const auto& p) -> std::vector<const Matrix*> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FfParams>) return {&p.weights};
        else if constexpr (std::is_same_v<P, LstmParams>)
          return {&p.input_gate.input, &p.forget_gate.input, &p.output_gate.input, &p.candidate.input};
        else if constexpr (std::is_same_v<P, GruParams>)
          return {&p.reset_gate.input, &p.update_gate.input, &p.candidate.input};
        else return {&p.update_gate.input, &p.candidate.input};
      },
      layer.params);
}

}  // namespace detail

/// One timestep. Returns the new state and the tape entry for backward.
inline std::pair<CellState, TapeStep> cell_forward(const Layer& layer, std::span<const double> x,
                                                   const CellState& state) {
  validate_layer(layer);
  require(x.size() == layer.input_dim(), "cell_forward: input dimension mismatch");
  const std::size_t n = layer.hidden_dim();
  if (layer.kind != CellKind::kFfRelu) require(state.h.size() == n, "cell_forward: hidden state size mismatch");
  if (layer.kind == CellKind::kLstm) require(state.c.size() == n, "cell_forward: LSTM needs a cell state");
  std::vector<Vector> proj;
  for (const Matrix* w : detail::input_weights(layer)) proj.push_back(detail::project_input(*w, x));
  TapeStep step = detail::step_from_projections(layer, x, proj, state);
  CellState next{step.h, step.c};
  return {std::move(next), std::move(step)};
}

using SequenceTape = std::vector<TapeStep>;

/// Runs a layer over a T x in sequence from the zero state; returns T x hidden.
/// FF layers treat rows independently.
inline Matrix sequence_forward(const Layer& layer, const Matrix& inputs, SequenceTape* tape = nullptr) {
  validate_layer(layer);
  require(inputs.cols() == layer.input_dim(), "sequence_forward: input dimension mismatch");
  const std::size_t steps = inputs.rows(), n = layer.hidden_dim();
  std::vector<Matrix> projections;
  for (const Matrix* w : detail::input_weights(layer)) projections.push_back(matmul(inputs, *w));
  Matrix out(steps, n);
  if (tape) {
    tape->clear();
    tape->reserve(steps);
  }
  CellState state = initial_state(layer.kind, n);
  std::vector<Vector> proj(projections.size());
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t g = 0; g < projections.size(); ++g) proj[g] = projections[g].row_copy(t);
    TapeStep step = detail::step_from_projections(layer, inputs.row(t), proj, state);
    out.set_row(t, step.h);
    state.h = step.h;
    state.c = step.c;
    if (tape) tape->push_back(std::move(step));
  }
  return out;
}

struct LayerGradients {
  LayerParams params;  // same shapes as the layer
  Matrix inputs;       // T x in
};

namespace detail {

/// Gradient of a gate's recurrent weights and the hidden-state gradient it sends back.
inline void gate_recurrent_backward(const GateWeights& w, GateWeights& g, std::span<const double> da,
                                    std::span<const double> h_in, std::span<double> dh_in) {
  const std::size_t n = da.size();
  for (std::size_t k = 0; k < h_in.size(); ++k) {
    const double hk = h_in[k];
    if (hk == 0.0) continue;
    double* row = g.recurrent.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += hk * da[j];
  }
  vecmat_t_accumulate(da, w.recurrent, dh_in);
}

inline double sigmoid_grad(double y) { return y * (1.0 - y); }

}  // namespace detail

/// Backpropagation through time over the whole tape.
///
/// grad_h is T x hidden: dL/dh_t from everything above this layer at each
/// step. Returns dL/dparams and dL/dx_t.
inline LayerGradients cell_backward(const Layer& layer, const SequenceTape& tape, const Matrix& grad_h) {
  validate_layer(layer);
  const std::size_t steps = tape.size(), n = layer.hidden_dim(), in = layer.input_dim();
  require(grad_h.rows() == steps, "cell_backward: tape and gradient lengths differ");
  require(grad_h.cols() == n, "cell_backward: gradient width != hidden size");

  LayerGradients out{zeros_like(layer.params), Matrix(steps, in)};
  // Pre-activation gradients per gate, T x hidden each, in input_weights() order.
  const std::size_t num_gates = detail::input_weights(layer).size();
  std::vector<Matrix> d_pre(num_gates, Matrix(steps, n));
  Matrix inputs(steps, in);
  for (std::size_t t = 0; t < steps; ++t) {
    require(tape[t].input.size() == in, "cell_backward: tape input size mismatch");
    inputs.set_row(t, tape[t].input);
  }

  Vector dh_next(n, 0.0), dc_next(n, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    const TapeStep& s = tape[t];
    Vector dh(n);
    for (std::size_t j = 0; j < n; ++j) dh[j] = grad_h(t, j) + dh_next[j];
    Vector dh_prev(n, 0.0);

    switch (layer.kind) {
      case CellKind::kFfRelu: {
        auto da = d_pre[0].row(t);
        for (std::size_t j = 0; j < n; ++j) da[j] = s.candidate_pre[j] > 0.0 ? dh[j] : 0.0;
        break;
      }
      case CellKind::kLstm: {
        const auto& p = std::get<LstmParams>(layer.params);
        auto& g = std::get<LstmParams>(out.params);
        auto da_i = d_pre[0].row(t), da_f = d_pre[1].row(t), da_o = d_pre[2].row(t), da_g = d_pre[3].row(t);
        Vector dc_prev(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double d_o = dh[j] * s.tanh_c[j];
          const double dc = dc_next[j] + dh[j] * s.output_gate[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
          da_i[j] = dc * s.candidate[j] * detail::sigmoid_grad(s.input_gate[j]);
          da_f[j] = dc * s.c_prev[j] * detail::sigmoid_grad(s.forget_gate[j]);
          da_o[j] = d_o * detail::sigmoid_grad(s.output_gate[j]);
          da_g[j] = dc * s.input_gate[j] * (1.0 - s.candidate[j] * s.candidate[j]);
          dc_prev[j] = dc * s.forget_gate[j];
        }
        detail::gate_recurrent_backward(p.input_gate, g.input_gate, da_i, s.h_prev, dh_prev);
        detail::gate_recurrent_backward(p.forget_gate, g.forget_gate, da_f, s.h_prev, dh_prev);
        detail::gate_recurrent_backward(p.output_gate, g.output_gate, da_o, s.h_prev, dh_prev);
        detail::gate_recurrent_backward(p.candidate, g.candidate, da_g, s.h_prev, dh_prev);
        dc_next = std::move(dc_prev);
        break;
      }
      case CellKind::kGru:
      case CellKind::kReluGru: {
        const auto& p = std::get<GruParams>(layer.params);
        auto& g = std::get<GruParams>(out.params);
        auto da_r = d_pre[0].row(t), da_z = d_pre[1].row(t), da_n = d_pre[2].row(t);
        const bool relu_candidate = layer.kind == CellKind::kReluGru;
        for (std::size_t j = 0; j < n; ++j) {
          const double dn = dh[j] * s.update_gate[j];
          const double dz = dh[j] * (s.candidate[j] - s.h_prev[j]);
          dh_prev[j] += dh[j] * (1.0 - s.update_gate[j]);
          da_n[j] = relu_candidate ? (s.candidate_pre[j] > 0.0 ? dn : 0.0)
                                   : dn * (1.0 - s.candidate[j] * s.candidate[j]);
          da_z[j] = dz * detail::sigmoid_grad(s.update_gate[j]);
        }
        // Candidate path sees r * h_prev.
        Vector d_reset_hidden(n, 0.0);
        detail::gate_recurrent_backward(p.candidate, g.candidate, da_n, s.reset_hidden, d_reset_hidden);
        for (std::size_t j = 0; j < n; ++j) {
          da_r[j] = d_reset_hidden[j] * s.h_prev[j] * detail::sigmoid_grad(s.reset_gate[j]);
          dh_prev[j] += d_reset_hidden[j] * s.reset_gate[j];
        }
        detail::gate_recurrent_backward(p.reset_gate, g.reset_gate, da_r, s.h_prev, dh_prev);
        detail::gate_recurrent_backward(p.update_gate, g.update_gate, da_z, s.h_prev, dh_prev);
        break;
      }
      case CellKind::kMReluGru: {
        const auto& p = std::get<MGruParams>(layer.params);
        auto& g = std::get<MGruParams>(out.params);
        auto da_z = d_pre[0].row(t), da_n = d_pre[1].row(t);
        for (std::size_t j = 0; j < n; ++j) {
          const double dn = dh[j] * s.update_gate[j];
          const double dz = dh[j] * (s.candidate[j] - s.h_prev[j]);
          dh_prev[j] += dh[j] * (1.0 - s.update_gate[j]);
          da_n[j] = s.candidate_pre[j] > 0.0 ? dn : 0.0;
          da_z[j] = dz * detail::sigmoid_grad(s.update_gate[j]);
        }
        detail::gate_recurrent_backward(p.update_gate, g.update_gate, da_z, s.h_prev, dh_prev);
        detail::gate_recurrent_backward(p.candidate, g.candidate, da_n, s.h_prev, dh_prev);
        break;
      }
    }
    dh_next = std::move(dh_prev);
  }

  // Input-side weights, biases and input gradients in bulk.
  auto weights = detail::input_weights(layer);
  std::vector<Matrix*> grad_inputs;
  std::vector<Matrix*> grad_biases;
  std::visit(
      [&](auto& g) {
        using P = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<P, FfParams>) {
          grad_inputs = {&g.weights};
          grad_biases = {&g.bias};
        } else if constexpr (std::is_same_v<P, LstmParams>) {
          grad_inputs = {&g.input_gate.input, &g.forget_gate.input, &g.output_gate.input, &g.candidate.input};
          grad_biases = {&g.input_gate.bias, &g.forget_gate.bias, &g.output_gate.bias, &g.candidate.bias};
        } else if constexpr (std::is_same_v<P, GruParams>) {
          grad_inputs = {&g.reset_gate.input, &g.update_gate.input, &g.candidate.input};
          grad_biases = {&g.reset_gate.bias, &g.update_gate.bias, &g.candidate.bias};
        } else {
          grad_inputs = {&g.update_gate.input, &g.candidate.input};
          grad_biases = {&g.update_gate.bias, &g.candidate.bias};
        }
      },
      out.params);
  for (std::size_t gate = 0; gate < num_gates; ++gate) {
    *grad_inputs[gate] = matmul_tn(inputs, d_pre[gate]);
    Matrix& db = *grad_biases[gate];
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t j = 0; j < n; ++j) db(0, j) += d_pre[gate](t, j);
    out.inputs += matmul_nt(d_pre[gate], *weights[gate]);
  }
  return out;
}

/// Inverted dropout. In training, each entry is zeroed with probability p and
/// survivors are scaled by 1/(1-p); at inference it is the identity. When
/// `mask` is given it receives the per-entry multiplier for backward.
inline Matrix dropout(Rng& rng, const Matrix& x, double p, bool training, Matrix* mask = nullptr) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (!training || p == 0.0) {
    if (mask) *mask = Matrix(x.rows(), x.cols(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix out = x;
  Matrix m(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double factor = rng.uniform() < p ? 0.0 : keep_scale;
    m.data()[i] = factor;
    out.data()[i] *= factor;
  }
  if (mask) *mask = std::move(m);
  return out;
}

/// relu(x W + b) for a batch of rows.
inline Matrix ff_layer_forward(const Matrix& weights, const Matrix& bias, const Matrix& x) {
  require(x.cols() == weights.rows(), "ff_layer_forward: input dimension mismatch");
  require(bias.rows() == 1 && bias.cols() == weights.cols(), "ff_layer_forward: bias shape mismatch");
  Matrix out = matmul(x, weights);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = relu(out(r, c) + bias(0, c));
  return out;
}

}  // namespace ram

#endif  // RAM_CELLS_HPP_
