// ram/training.hpp

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

// Staged training with early stopping on the development cross-entropy.
//
// Each stage runs epochs until the dev loss of an epoch is not lower than
// that of the epoch before it (or until max_epochs, 0 = no cap). The stage
// then hands the lowest-dev-loss weights seen so far (ties: earliest, the
// incoming weights count as epoch 0) to the next stage, which starts with a
// fresh optimizer state.
//
// Batches: FF networks draw shuffled frames; recurrent networks draw whole
// utterances, grouped by similar length. Each utterance runs at its own
// length, which is what padding to the batch maximum plus loss masking
// computes. The batch loss is the mean cross-entropy over its frames.
//
// Schedule file: one stage per line, "sgd|adam  lr  batch  momentum  max_epochs";
// '#' starts a comment.

#ifndef RAM_TRAINING_HPP_
#define RAM_TRAINING_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/features.hpp"
#include "ram/network.hpp"
#include "ram/optimizer.hpp"
#include "ram/rng.hpp"

namespace ram {

enum class OptimizerKind { kSgdMomentum, kAdam };

struct Stage {
  OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.0;
  std::size_t batch_size = 1;
  double momentum = 0.0;
  std::size_t max_epochs = 0;  // 0: stop only on the dev criterion
};

struct StageSchedule {
  std::vector<Stage> stages;
};

inline StageSchedule paper_ff_schedule() {
  using enum OptimizerKind;
  return {{{kSgdMomentum, 1e-2, 256, 0.9, 0}, {kSgdMomentum, 4e-3, 1024, 0.9, 0}, {kSgdMomentum, 1e-4, 2048, 0.9, 0}}};
}

/// The Adam learning rate is not published; 1e-3 is Adam's usual default.
inline StageSchedule paper_rnn_schedule() {
  using enum OptimizerKind;
  return {{{kAdam, 1e-3, 512, 0.0, 0},
           {kSgdMomentum, 1e-3, 128, 0.9, 0},
           {kSgdMomentum, 1e-4, 128, 0.9, 0},
           {kSgdMomentum, 1e-5, 128, 0.9, 0}}};
}

/// Desk-scale FF: same three-stage shape, batches sized for a few thousand frames.
inline StageSchedule desk_ff_schedule() {
  using enum OptimizerKind;
  return {{{kSgdMomentum, 1e-2, 64, 0.9, 12}, {kSgdMomentum, 4e-3, 128, 0.9, 6}, {kSgdMomentum, 1e-4, 256, 0.9, 3}}};
}

/// Desk-scale RNN: Adam then SGD, batches counted in utterances.
inline StageSchedule desk_rnn_schedule() {
  using enum OptimizerKind;
  return {{{kAdam, 3e-3, 4, 0.0, 12},
           {kSgdMomentum, 1e-3, 4, 0.9, 4},
           {kSgdMomentum, 1e-4, 4, 0.9, 2},
           {kSgdMomentum, 1e-5, 4, 0.9, 2}}};
}

inline StageSchedule parse_schedule(std::istream& is) {
  StageSchedule schedule;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string opt;
    if (!(ls >> opt)) continue;
    Stage s;
    if (opt == "sgd") s.optimizer = OptimizerKind::kSgdMomentum;
    else if (opt == "adam") s.optimizer = OptimizerKind::kAdam;
    else throw IoError("schedule line " + std::to_string(line_no) + ": unknown optimizer '" + opt + "'");
    if (!(ls >> s.learning_rate >> s.batch_size >> s.momentum))
      throw IoError("schedule line " + std::to_string(line_no) + ": expected lr batch momentum [max_epochs]");
    if (!(ls >> s.max_epochs)) s.max_epochs = 0;
    if (s.batch_size == 0 || s.learning_rate < 0.0)
      throw IoError("schedule line " + std::to_string(line_no) + ": invalid stage");
    schedule.stages.push_back(s);
  }
  if (schedule.stages.empty()) throw IoError("schedule: no stages");
  return schedule;
}

/// Stopping rule of one stage.
class EarlyStopping {
 public:
  explicit EarlyStopping(double initial_loss = std::numeric_limits<double>::infinity()) : best_(initial_loss) {}

  /// Records the dev loss of the next epoch; true if it is the new best.
  bool record(double dev_loss) {
    losses_.push_back(dev_loss);
    if (dev_loss < best_) {
      best_ = dev_loss;
      best_epoch_ = losses_.size();
      return true;
    }
    return false;
  }

  /// True once an epoch failed to lower the dev loss of the epoch before it.
  bool should_stop() const {
    const std::size_t n = losses_.size();
    return n >= 2 && losses_[n - 1] >= losses_[n - 2];
  }

  std::size_t epochs() const { return losses_.size(); }
  std::size_t best_epoch() const { return best_epoch_; }  // 0: the incoming weights
  double best_loss() const { return best_; }

 private:
  std::vector<double> losses_;
  double best_;
  std::size_t best_epoch_ = 0;
};

/// Network-ready inputs: normalized, stacked, delay-padded.
struct PreparedSet {
  std::vector<Matrix> inputs;
  std::vector<std::vector<int>> labels;
  std::size_t offset = 0;  // output row of label 0 (the output delay)
  std::size_t frames = 0;
};

inline PreparedSet prepare_set(const NetworkModel& m, std::span<const Utterance> utts) {
  require(!utts.empty(), "prepare_set: empty data");
  PreparedSet set;
  set.offset = m.output_delay();
  for (const Utterance& u : utts) {
    require(u.has_labels(), "prepare_set: utterance " + u.id + " has no labels");
    require(u.labels.size() == u.num_frames(), "prepare_set: label count != frame count in " + u.id);
    for (int l : u.labels)
      require(l >= 0 && static_cast<std::size_t>(l) < m.output_dim(), "prepare_set: label out of range in " + u.id);
    set.inputs.push_back(prepare_input(m, u.frames));
    set.labels.push_back(u.labels);
    set.frames += u.num_frames();
  }
  return set;
}

/// Mean per-frame cross-entropy in inference mode.
inline double evaluate_loss(const NetworkModel& m, const PreparedSet& set) {
  double loss = 0.0;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) loss += utterance_loss(m, set.inputs[i], set.labels[i]);
  return loss / static_cast<double>(set.frames);
}

namespace detail {

inline void optimizer_step(NetworkModel& m, const std::vector<Matrix>& grads, OptimizerState& state,
                           const Stage& stage) {
  const std::vector<Matrix*> params = parameter_refs(m);
  if (stage.optimizer == OptimizerKind::kAdam) adam_step(params, grads, state, stage.learning_rate);
  else sgd_momentum_step(params, grads, state, stage.learning_rate, stage.momentum);
}

/// Utterance batches: shuffle, stable-sort by length, chunk, shuffle chunks.
inline std::vector<std::vector<std::size_t>> utterance_batches(const PreparedSet& set, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(set.inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.labels[a].size() < set.labels[b].size(); });
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
  rng.shuffle(std::span<std::vector<std::size_t>>(out));
  return out;
}

}  // namespace detail

/// One pass over the training set; returns the mean training cross-entropy.
/// Everything random (batch order, dropout) derives from `epoch_seed`.
inline double train_epoch(NetworkModel& m, const PreparedSet& set, const Stage& stage, OptimizerState& state,
                          std::uint64_t epoch_seed) {
  require(!set.inputs.empty(), "train_epoch: empty data");
  require(stage.batch_size >= 1, "train_epoch: batch size must be >= 1");
  Rng order_rng(derive_seed(epoch_seed, 0));
  double total = 0.0;

  if (m.kind() == CellKind::kFfRelu) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> frames;
    frames.reserve(set.frames);
    for (std::size_t u = 0; u < set.inputs.size(); ++u)
      for (std::size_t t = 0; t < set.labels[u].size(); ++t)
        frames.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(t));
    order_rng.shuffle(std::span(frames));
    const std::size_t width = set.inputs.front().cols();
    for (std::size_t b = 0, batch_no = 0; b < frames.size(); b += stage.batch_size, ++batch_no) {
      const std::size_t end = std::min(frames.size(), b + stage.batch_size);
      Matrix x(end - b, width);
      std::vector<int> labels(end - b);
      for (std::size_t i = b; i < end; ++i) {
        const auto [u, t] = frames[i];
        x.set_row(i - b, set.inputs[u].row(set.offset + t));
        labels[i - b] = set.labels[u][t];
      }
      std::vector<Matrix> grads = zero_gradients(m);
      Rng drop(derive_seed(epoch_seed, 1, batch_no));
      total += accumulate_gradients(m, x, labels, 0, 1.0 / static_cast<double>(end - b), &drop, grads);
      detail::optimizer_step(m, grads, state, stage);
    }
  } else {
    for (const auto& batch : detail::utterance_batches(set, stage.batch_size, order_rng)) {
      std::size_t frames = 0;
      for (std::size_t u : batch) frames += set.labels[u].size();
      const double scale = 1.0 / static_cast<double>(frames);
      std::vector<Matrix> grads = zero_gradients(m);
      for (std::size_t u : batch) {
        Rng drop(derive_seed(epoch_seed, 2, u));
        total += accumulate_gradients(m, set.inputs[u], set.labels[u], set.offset, scale, &drop, grads);
      }
      detail::optimizer_step(m, grads, state, stage);
    }
  }
  return total / static_cast<double>(set.frames);
}

struct EpochLog {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  NetworkModel model;
  std::vector<EpochLog> log;
};

inline void write_training_log(std::ostream& os, std::span<const EpochLog> log) {
  os << "stage,epoch,train_loss,dev_loss\n";
  os.precision(17);
  for (const EpochLog& e : log) os << e.stage << ',' << e.epoch << ',' << e.train_loss << ',' << e.dev_loss << '\n';
}

/// Builds a network and fits its input normalization and state priors on
/// the training utterances.
inline NetworkModel initialize_network(const NetworkConfig& config, std::span<const Utterance> train, Rng& rng) {
  require(!train.empty(), "initialize_network: empty training data");
  NetworkModel m = make_network(config, rng);
  std::vector<Matrix> frames;
  std::vector<std::vector<int>> labels;
  for (const Utterance& u : train) {
    frames.push_back(u.frames);
    labels.push_back(u.labels);
  }
  fit_input_normalization(m, frames);
  fit_log_priors(m, labels);
  return m;
}

/// Runs every stage of `schedule`; the model's normalization and priors are
/// left as given.
inline TrainResult train_staged(NetworkModel model, const StageSchedule& schedule, std::span<const Utterance> train,
                                std::span<const Utterance> dev, std::uint64_t seed) {
  require(!train.empty() && !dev.empty(), "train_staged: empty train or dev data");
  require(!schedule.stages.empty(), "train_staged: empty schedule");
  const PreparedSet train_set = prepare_set(model, train);
  const PreparedSet dev_set = prepare_set(model, dev);

  TrainResult result;
  for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
    const Stage& stage = schedule.stages[s];
    OptimizerState state;
    NetworkModel best = model;
    EarlyStopping stopper(evaluate_loss(model, dev_set));
    for (std::size_t epoch = 1;; ++epoch) {
      const double train_loss = train_epoch(model, train_set, stage, state, derive_seed(seed, s + 1, epoch));
      const double dev_loss = evaluate_loss(model, dev_set);
      result.log.push_back({s + 1, epoch, train_loss, dev_loss});
      if (stopper.record(dev_loss)) best = model;
      if (stopper.should_stop() || (stage.max_epochs != 0 && epoch >= stage.max_epochs)) break;
    }
    model = std::move(best);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace ram

#endif  // RAM_TRAINING_HPP_
