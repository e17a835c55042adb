// ram/network.hpp

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

// Acoustic model: a stack of identical hidden layers (FF ReLU or one of the
// recurrent cells) topped by a softmax over tied states.
//
// Input pipeline for an utterance of T frames:
//   1. z = (x - shift) * scale, per coefficient (statistics of the training set)
//   2. stack `context` frames around each t, repeating boundary frames
//   3. append `output_delay` copies of the last row
// The network then runs over T + delay rows and output row t + delay is the
// posterior for label t.
//
// Model file (all integers u32, reals f64, little-endian):
//   "RAM-CELL"  kind  input_dim  hidden_dim  num_layers  output_dim
//   output_delay  context  dropout(f64)
//   Matrix shift(1 x input_dim)  Matrix scale(1 x input_dim)
//   Matrix log_priors(1 x output_dim)
//   every layer's matrices, in layer order and LayerParams visit order
//   Matrix output_weights(hidden x output)  Matrix output_bias(1 x output)
// Each Matrix is in the RAM1 format.

#ifndef RAM_NETWORK_HPP_
#define RAM_NETWORK_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "ram/cells.hpp"
#include "ram/error.hpp"
#include "ram/matrix.hpp"
#include "ram/matrix_io.hpp"
#include "ram/numerics.hpp"
#include "ram/rng.hpp"

namespace ram {

inline constexpr std::string_view kModelMagic = "RAM-CELL";

struct NetworkConfig {
  CellKind kind = CellKind::kGru;
  std::size_t input_dim = 0;  // per-frame feature dim, before stacking
  std::size_t hidden_dim = 0;
  std::size_t num_layers = 0;
  std::size_t output_dim = 0;
  std::size_t context = 1;  // frames stacked per input row, odd
  std::size_t output_delay = 0;
  double dropout = 0.0;
};

inline bool operator==(const NetworkConfig& a, const NetworkConfig& b) {
  return a.kind == b.kind && a.input_dim == b.input_dim && a.hidden_dim == b.hidden_dim &&
         a.num_layers == b.num_layers && a.output_dim == b.output_dim && a.context == b.context &&
         a.output_delay == b.output_delay && a.dropout == b.dropout;
}

inline bool operator==(const GateWeights& a, const GateWeights& b) {
  return a.input == b.input && a.recurrent == b.recurrent && a.bias == b.bias;
}
inline bool operator==(const FfParams& a, const FfParams& b) { return a.weights == b.weights && a.bias == b.bias; }
inline bool operator==(const LstmParams& a, const LstmParams& b) {
  return a.input_gate == b.input_gate && a.forget_gate == b.forget_gate && a.output_gate == b.output_gate &&
         a.candidate == b.candidate;
}
inline bool operator==(const GruParams& a, const GruParams& b) {
  return a.reset_gate == b.reset_gate && a.update_gate == b.update_gate && a.candidate == b.candidate;
}
inline bool operator==(const MGruParams& a, const MGruParams& b) {
  return a.update_gate == b.update_gate && a.candidate == b.candidate;
}
inline bool operator==(const Layer& a, const Layer& b) { return a.kind == b.kind && a.params == b.params; }

/// The paper-scale feed-forward topology: 8 x 2048 ReLU, 11 stacked frames.
inline NetworkConfig paper_ff_config(std::size_t input_dim = 40, std::size_t output_dim = 1909) {
  return {CellKind::kFfRelu, input_dim, 2048, 8, output_dim, 11, 0, 0.2};
}

/// The paper-scale recurrent topology: 4 x 1024, output delay 5.
inline NetworkConfig paper_rnn_config(CellKind kind, std::size_t input_dim = 40, std::size_t output_dim = 1909) {
  return {kind, input_dim, 1024, 4, output_dim, 1, 5, 0.2};
}

struct NetworkModel {
  NetworkConfig config;
  std::vector<Layer> layers;
  Matrix output_weights;  // hidden x output
  Matrix output_bias;     // 1 x output
  Vector input_shift;     // input_dim
  Vector input_scale;     // input_dim
  Vector log_priors;      // output_dim

  CellKind kind() const { return config.kind; }
  std::size_t input_dim() const { return config.input_dim; }
  std::size_t hidden_dim() const { return config.hidden_dim; }
  std::size_t num_layers() const { return config.num_layers; }
  std::size_t output_dim() const { return config.output_dim; }
  std::size_t output_delay() const { return config.output_delay; }

  friend bool operator==(const NetworkModel&, const NetworkModel&) = default;
};

inline void validate_config(const NetworkConfig& c) {
  require(c.input_dim >= 1 && c.hidden_dim >= 1 && c.num_layers >= 1 && c.output_dim >= 1,
          "network: all dimensions must be >= 1");
  require(c.context % 2 == 1, "network: context must be odd");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "network: dropout must be in [0, 1)");
}

/// Fresh network with Glorot weights and identity input normalization.
inline NetworkModel make_network(const NetworkConfig& config, Rng& rng) {
  validate_config(config);
  NetworkModel m;
  m.config = config;
  std::size_t in = config.input_dim * config.context;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    m.layers.push_back(make_layer(config.kind, in, config.hidden_dim, rng));
    in = config.hidden_dim;
  }
  m.output_weights = init_glorot(rng, config.hidden_dim, config.output_dim);
  m.output_bias = Matrix(1, config.output_dim);
  m.input_shift.assign(config.input_dim, 0.0);
  m.input_scale.assign(config.input_dim, 1.0);
  m.log_priors.assign(config.output_dim, -std::log(static_cast<double>(config.output_dim)));
  return m;
}

/// Visits every trainable matrix in serialization order.
template <class F>
void for_each_parameter(NetworkModel& m, F&& f) {
  for (Layer& layer : m.layers) for_each_matrix(layer.params, f);
  f(m.output_weights);
  f(m.output_bias);
}

template <class F>
void for_each_parameter(const NetworkModel& m, F&& f) {
  for (const Layer& layer : m.layers) for_each_matrix(layer.params, f);
  f(m.output_weights);
  f(m.output_bias);
}

inline std::vector<Matrix*> parameter_refs(NetworkModel& m) {
  std::vector<Matrix*> out;
  for_each_parameter(m, [&](Matrix& p) { out.push_back(&p); });
  return out;
}

/// Zero-filled gradient buffers, one per parameter, in parameter_refs order.
inline std::vector<Matrix> zero_gradients(const NetworkModel& m) {
  std::vector<Matrix> out;
  for_each_parameter(m, [&](const Matrix& p) { out.emplace_back(p.rows(), p.cols()); });
  return out;
}

/// Frame t becomes [x_{t-h} ... x_{t+h}] with h = context / 2; indices are
/// clamped to the utterance so edge frames repeat.
inline Matrix stack_frames(const Matrix& frames, std::size_t context) {
  require(frames.rows() > 0, "stack_frames: empty utterance");
  require(context % 2 == 1, "stack_frames: context must be odd");
  if (context == 1) return frames;
  const std::size_t steps = frames.rows(), dim = frames.cols();
  const auto half = static_cast<std::ptrdiff_t>(context / 2);
  const auto last = static_cast<std::ptrdiff_t>(steps) - 1;
  Matrix out(steps, dim * context);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const auto src = static_cast<std::size_t>(std::clamp(static_cast<std::ptrdiff_t>(t) + k, std::ptrdiff_t{0}, last));
      const auto slot = static_cast<std::size_t>(k + half);
      std::copy(frames.row(src).begin(), frames.row(src).end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(slot * dim));
    }
  }
  return out;
}

/// Sets the input normalization from training frames (mean, 1/stddev).
inline void fit_input_normalization(NetworkModel& m, std::span<const Matrix> frames) {
  const std::size_t dim = m.input_dim();
  Vector sum(dim, 0.0), sq(dim, 0.0);
  double n = 0.0;
  for (const Matrix& f : frames) {
    require(f.cols() == dim, "fit_input_normalization: dimension mismatch");
    for (std::size_t t = 0; t < f.rows(); ++t)
      for (std::size_t d = 0; d < dim; ++d) {
        sum[d] += f(t, d);
        sq[d] += f(t, d) * f(t, d);
      }
    n += static_cast<double>(f.rows());
  }
  require(n > 0.0, "fit_input_normalization: no frames");
  for (std::size_t d = 0; d < dim; ++d) {
    const double mean = sum[d] / n;
    const double var = sq[d] / n - mean * mean;
    m.input_shift[d] = mean;
    m.input_scale[d] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
}

/// Log state priors from label counts, add-one smoothed.
inline void fit_log_priors(NetworkModel& m, std::span<const std::vector<int>> labels) {
  Vector counts(m.output_dim(), 1.0);
  double total = static_cast<double>(m.output_dim());
  for (const auto& seq : labels)
    for (int l : seq) {
      require(l >= 0 && static_cast<std::size_t>(l) < m.output_dim(), "fit_log_priors: label out of range");
      counts[static_cast<std::size_t>(l)] += 1.0;
      total += 1.0;
    }
  for (std::size_t s = 0; s < counts.size(); ++s) m.log_priors[s] = std::log(counts[s] / total);
}

/// Steps 1-3 of the input pipeline; returns (T + delay) x (input_dim * context).
inline Matrix prepare_input(const NetworkModel& m, const Matrix& frames) {
  require(frames.cols() == m.input_dim(), "prepare_input: feature dimension mismatch");
  require(frames.rows() > 0, "prepare_input: empty utterance");
  Matrix z = frames;
  for (std::size_t t = 0; t < z.rows(); ++t)
    for (std::size_t d = 0; d < z.cols(); ++d) z(t, d) = (z(t, d) - m.input_shift[d]) * m.input_scale[d];
  Matrix stacked = stack_frames(z, m.config.context);
  const std::size_t delay = m.output_delay();
  if (delay == 0) return stacked;
  Matrix out(stacked.rows() + delay, stacked.cols());
  std::copy(stacked.values().begin(), stacked.values().end(), out.data());
  for (std::size_t k = 0; k < delay; ++k) out.set_row(stacked.rows() + k, stacked.row(stacked.rows() - 1));
  return out;
}

/// Everything the backward pass needs from one forward run.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input to layer l (after the previous layer's dropout)
  std::vector<Matrix> outputs;       // raw layer outputs before dropout
  std::vector<Matrix> masks;         // dropout multipliers, empty when inactive
  std::vector<SequenceTape> tapes;   // recurrent layers only
  Matrix top;                        // input to the softmax layer
  Matrix probs;                      // rows x output_dim
};

/// Forward over prepared input rows. For recurrent kinds the rows are one
/// sequence; for FF they are independent frames. `dropout_rng` non-null means
/// training mode.
inline ForwardCache network_forward(const NetworkModel& m, const Matrix& input, Rng* dropout_rng,
                                    bool keep_tapes = true) {
  ForwardCache cache;
  const bool training = dropout_rng != nullptr && m.config.dropout > 0.0;
  Matrix x = input;
  for (const Layer& layer : m.layers) {
    Matrix out;
    if (layer.kind == CellKind::kFfRelu) {
      const auto& p = std::get<FfParams>(layer.params);
      out = ff_layer_forward(p.weights, p.bias, x);
    } else {
      SequenceTape tape;
      out = sequence_forward(layer, x, keep_tapes ? &tape : nullptr);
      if (keep_tapes) cache.tapes.push_back(std::move(tape));
    }
    Matrix mask;
    Matrix next = training ? dropout(*dropout_rng, out, m.config.dropout, true, &mask) : out;
    if (keep_tapes) {
      cache.layer_inputs.push_back(std::move(x));
      cache.outputs.push_back(std::move(out));
      cache.masks.push_back(std::move(mask));
    }
    x = std::move(next);
  }
  Matrix logits = matmul(x, m.output_weights);
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (std::size_t c = 0; c < logits.cols(); ++c) logits(r, c) += m.output_bias(0, c);
  cache.probs = softmax_rows(logits);
  cache.top = std::move(x);
  return cache;
}

/// Adds gradients of  scale * sum_i -log p(label_i | row offset + i)  to
/// `grads` (parameter_refs order) and returns the unscaled summed loss.
inline double accumulate_gradients(const NetworkModel& m, const Matrix& input, std::span<const int> labels,
                                   std::size_t offset, double scale, Rng* dropout_rng, std::vector<Matrix>& grads) {
  require(offset + labels.size() <= input.rows(), "accumulate_gradients: labels exceed input rows");
  ForwardCache cache = network_forward(m, input, dropout_rng, true);
  const std::size_t out_dim = m.output_dim();

  double loss = 0.0;
  Matrix d_logits(input.rows(), out_dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    require(label >= 0 && static_cast<std::size_t>(label) < out_dim, "accumulate_gradients: label out of range");
    const std::size_t r = offset + i;
    loss -= std::log(std::max(cache.probs(r, static_cast<std::size_t>(label)), kProbabilityFloor));
    for (std::size_t c = 0; c < out_dim; ++c) d_logits(r, c) = scale * cache.probs(r, c);
    d_logits(r, static_cast<std::size_t>(label)) -= scale;
  }

  // Parameter order: layers..., output_weights, output_bias.
  std::size_t slot = 0;
  std::vector<std::size_t> layer_slot;
  for (const Layer& layer : m.layers) {
    layer_slot.push_back(slot);
    for_each_matrix(layer.params, [&](const Matrix&) { ++slot; });
  }
  grads[slot] += matmul_tn(cache.top, d_logits);
  for (std::size_t r = 0; r < d_logits.rows(); ++r)
    for (std::size_t c = 0; c < out_dim; ++c) grads[slot + 1](0, c) += d_logits(r, c);

  Matrix d_x = matmul_nt(d_logits, m.output_weights);
  std::size_t tape_index = m.layers.size();
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const Layer& layer = m.layers[l];
    if (!cache.masks[l].empty())
      for (std::size_t i = 0; i < d_x.size(); ++i) d_x.data()[i] *= cache.masks[l].data()[i];
    std::size_t g = layer_slot[l];
    if (layer.kind == CellKind::kFfRelu) {
      const auto& p = std::get<FfParams>(layer.params);
      Matrix d_pre = std::move(d_x);
      const Matrix& out = cache.outputs[l];
      for (std::size_t i = 0; i < d_pre.size(); ++i)
        if (out.data()[i] <= 0.0) d_pre.data()[i] = 0.0;
      grads[g] += matmul_tn(cache.layer_inputs[l], d_pre);
      for (std::size_t r = 0; r < d_pre.rows(); ++r)
        for (std::size_t c = 0; c < d_pre.cols(); ++c) grads[g + 1](0, c) += d_pre(r, c);
      if (l > 0) d_x = matmul_nt(d_pre, p.weights);
    } else {
      --tape_index;
      LayerGradients lg = cell_backward(layer, cache.tapes[tape_index], d_x);
      for_each_matrix(lg.params, [&](const Matrix& gm) { grads[g++] += gm; });
      d_x = std::move(lg.inputs);
    }
  }
  return loss;
}

/// Frame posteriors for an utterance (inference mode), T x output_dim.
inline Matrix posteriors(const NetworkModel& m, const Matrix& frames) {
  const Matrix input = prepare_input(m, frames);
  ForwardCache cache = network_forward(m, input, nullptr, false);
  return row_slice(cache.probs, m.output_delay(), m.output_delay() + frames.rows());
}

/// Summed cross-entropy of one utterance's labels in inference mode.
inline double utterance_loss(const NetworkModel& m, const Matrix& prepared, std::span<const int> labels) {
  ForwardCache cache = network_forward(m, prepared, nullptr, false);
  double loss = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int label = labels[t];
    require(label >= 0 && static_cast<std::size_t>(label) < m.output_dim(), "utterance_loss: label out of range");
    loss -= std::log(std::max(cache.probs(m.output_delay() + t, static_cast<std::size_t>(label)), kProbabilityFloor));
  }
  return loss;
}

inline void write_network(std::ostream& os, const NetworkModel& m) {
  const NetworkConfig& c = m.config;
  write_magic(os, kModelMagic);
  write_u32(os, static_cast<std::uint32_t>(c.kind));
  write_u32(os, static_cast<std::uint32_t>(c.input_dim));
  write_u32(os, static_cast<std::uint32_t>(c.hidden_dim));
  write_u32(os, static_cast<std::uint32_t>(c.num_layers));
  write_u32(os, static_cast<std::uint32_t>(c.output_dim));
  write_u32(os, static_cast<std::uint32_t>(c.output_delay));
  write_u32(os, static_cast<std::uint32_t>(c.context));
  write_f64(os, c.dropout);
  write_matrix(os, Matrix::row_vector(m.input_shift));
  write_matrix(os, Matrix::row_vector(m.input_scale));
  write_matrix(os, Matrix::row_vector(m.log_priors));
  for_each_parameter(m, [&](const Matrix& p) { write_matrix(os, p); });
  if (!os) throw IoError("write_network: stream failure");
}

inline NetworkModel read_network(std::istream& is) {
  expect_magic(is, kModelMagic);
  NetworkConfig c;
  const std::uint32_t tag = read_u32(is);
  if (tag > static_cast<std::uint32_t>(CellKind::kMReluGru)) throw IoError("read_network: unknown architecture tag");
  c.kind = static_cast<CellKind>(tag);
  c.input_dim = read_u32(is);
  c.hidden_dim = read_u32(is);
  c.num_layers = read_u32(is);
  c.output_dim = read_u32(is);
  c.output_delay = read_u32(is);
  c.context = read_u32(is);
  c.dropout = read_f64(is);
  try {
    validate_config(c);
  } catch (const ContractError& e) {
    throw IoError(std::string("read_network: ") + e.what());
  }
  Rng scratch(0);
  NetworkModel m = make_network(c, scratch);
  auto vec = [&](std::size_t n, const char* what) {
    const Matrix v = read_matrix(is);
    if (v.rows() != 1 || v.cols() != n) throw IoError(std::string("read_network: bad shape for ") + what);
    return Vector(v.values().begin(), v.values().end());
  };
  m.input_shift = vec(c.input_dim, "input shift");
  m.input_scale = vec(c.input_dim, "input scale");
  m.log_priors = vec(c.output_dim, "log priors");
  for_each_parameter(m, [&](Matrix& p) {
    Matrix v = read_matrix(is);
    if (!v.same_shape(p)) throw IoError("read_network: parameter shape mismatch");
    p = std::move(v);
  });
  return m;
}

inline void save_network(const std::filesystem::path& path, const NetworkModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_network(os, m);
}

inline NetworkModel load_network(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_network(is);
}

}  // namespace ram

#endif  // RAM_NETWORK_HPP_
