// ram/decode.hpp

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

// Bigram phone model and Viterbi decoding over hybrid scaled likelihoods.
//
// Each phone is a left-to-right HMM over its states. Every state loops with
// probability p_loop and otherwise advances; leaving the last state of phone
// i enters the first state of phone j with weight lm_weight * log P(j | i).
// The first frame sits in the first state of some phone j, weighted by
// lm_weight * log P_init(j). A path must end in the last state of a phone.
//
// Emission score of state s at frame t:  log post(t, s) - log prior(s).
//
// Ties are broken towards the lowest predecessor phone index. Within one
// predecessor phone the in-phone arc (self-loop or advance) is tried before
// the re-entry arc, and only a strictly better score replaces a candidate.
//
// lm.tsv: "from<TAB>to<TAB>logprob" rows; from = "<s>" gives the initial
// distribution.

#ifndef RAM_DECODE_HPP_
#define RAM_DECODE_HPP_

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/matrix.hpp"
#include "ram/numerics.hpp"
#include "ram/phones.hpp"

namespace ram {

inline constexpr const char* kSentenceStart = "<s>";

struct BigramModel {
  Vector initial;     // log P(j) at utterance start
  Matrix transition;  // log P(j | i), row i

  std::size_t num_phones() const { return initial.size(); }
};

/// Maximum-likelihood bigram with `floor` added to every count.
inline BigramModel build_bigram(const std::vector<std::vector<int>>& transcripts, std::size_t num_phones,
                                double floor) {
  require(num_phones >= 1, "build_bigram: no phones");
  require(floor > 0.0, "build_bigram: smoothing floor must be positive");
  Vector init(num_phones, floor);
  Matrix trans(num_phones, num_phones, floor);
  std::size_t seen = 0;
  for (const auto& seq : transcripts) {
    for (std::size_t k = 0; k < seq.size(); ++k) {
      require(seq[k] >= 0 && static_cast<std::size_t>(seq[k]) < num_phones, "build_bigram: phone out of range");
      if (k == 0) init[static_cast<std::size_t>(seq[0])] += 1.0;
      else trans(static_cast<std::size_t>(seq[k - 1]), static_cast<std::size_t>(seq[k])) += 1.0;
      ++seen;
    }
  }
  require(seen > 0, "build_bigram: no transcript data");
  BigramModel m;
  m.initial.resize(num_phones);
  m.transition = Matrix(num_phones, num_phones);
  double z = 0.0;
  for (double v : init) z += v;
  for (std::size_t j = 0; j < num_phones; ++j) m.initial[j] = std::log(init[j] / z);
  for (std::size_t i = 0; i < num_phones; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < num_phones; ++j) row += trans(i, j);
    for (std::size_t j = 0; j < num_phones; ++j) m.transition(i, j) = std::log(trans(i, j) / row);
  }
  return m;
}

inline BigramModel uniform_bigram(std::size_t num_phones) {
  BigramModel m;
  const double l = -std::log(static_cast<double>(num_phones));
  m.initial.assign(num_phones, l);
  m.transition = Matrix(num_phones, num_phones, l);
  return m;
}

inline void write_bigram(std::ostream& os, const BigramModel& m, const PhoneInventory& inv) {
  require(m.num_phones() == inv.num_phones(), "write_bigram: inventory size mismatch");
  os.precision(17);
  for (std::size_t j = 0; j < m.num_phones(); ++j)
    os << kSentenceStart << '\t' << inv.symbol(j) << '\t' << m.initial[j] << '\n';
  for (std::size_t i = 0; i < m.num_phones(); ++i)
    for (std::size_t j = 0; j < m.num_phones(); ++j)
      os << inv.symbol(i) << '\t' << inv.symbol(j) << '\t' << m.transition(i, j) << '\n';
}

/// Missing rows default to log 0 (= -inf); every row must then normalize.
inline BigramModel read_bigram(std::istream& is, const PhoneInventory& inv) {
  const std::size_t n = inv.num_phones();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  BigramModel m{Vector(n, neg_inf), Matrix(n, n, neg_inf)};
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string from, to;
    double lp = 0.0;
    if (!(ls >> from)) continue;
    if (!(ls >> to >> lp)) throw IoError("lm line " + std::to_string(line_no) + ": expected from to logprob");
    const auto j = inv.find(to);
    if (!j) throw IoError("lm line " + std::to_string(line_no) + ": unknown phone " + to);
    if (from == kSentenceStart) {
      m.initial[*j] = lp;
    } else {
      const auto i = inv.find(from);
      if (!i) throw IoError("lm line " + std::to_string(line_no) + ": unknown phone " + from);
      m.transition(*i, *j) = lp;
    }
  }
  auto check = [](std::span<const double> row) {
    double s = 0.0;
    for (double v : row) s += std::exp(v);
    if (std::abs(s - 1.0) > 1e-6) throw IoError("lm: a distribution does not sum to 1");
  };
  check(m.initial);
  for (std::size_t i = 0; i < n; ++i) check(m.transition.row(i));
  return m;
}

struct DecodeOptions {
  double lm_weight = 1.0;
  double self_loop = 0.5;  // p_loop of every HMM state
};

struct DecodeResult {
  std::vector<int> phones;  // phone indices in entry order
  std::vector<int> states;  // best state per frame
  double log_score = -std::numeric_limits<double>::infinity();
};

/// Log scaled likelihoods log post - log prior, T x N.
inline Matrix scaled_log_likelihoods(const Matrix& posteriors, std::span<const double> log_priors) {
  require(posteriors.cols() == log_priors.size(), "viterbi_decode: prior count != posterior columns");
  Matrix e(posteriors.rows(), posteriors.cols());
  for (std::size_t s = 0; s < log_priors.size(); ++s)
    require(std::isfinite(log_priors[s]), "viterbi_decode: zero or invalid prior");
  for (std::size_t t = 0; t < e.rows(); ++t)
    for (std::size_t s = 0; s < e.cols(); ++s)
      e(t, s) = std::log(std::max(posteriors(t, s), kProbabilityFloor)) - log_priors[s];
  return e;
}

inline DecodeResult viterbi_decode(const Matrix& posteriors, std::span<const double> log_priors,
                                   const BigramModel& bigram, const PhoneInventory& inv,
                                   const DecodeOptions& opt = {}) {
  require(posteriors.cols() == inv.num_states(), "viterbi_decode: posterior columns != inventory states");
  require(bigram.num_phones() == inv.num_phones(), "viterbi_decode: bigram size != phone count");
  require(opt.self_loop > 0.0 && opt.self_loop < 1.0, "viterbi_decode: self-loop probability must be in (0, 1)");
  const Matrix e = scaled_log_likelihoods(posteriors, log_priors);
  const std::size_t steps = posteriors.rows(), states = inv.num_states(), phones = inv.num_phones();
  DecodeResult result;
  if (steps == 0) return result;

  const double neg_inf = -std::numeric_limits<double>::infinity();
  const double stay = std::log(opt.self_loop), move = std::log(1.0 - opt.self_loop);
  // lm_weight 0 must silence impossible (-inf) bigram entries too.
  auto lm = [&](double logprob) { return opt.lm_weight == 0.0 ? 0.0 : opt.lm_weight * logprob; };
  // Back-pointer: predecessor state, and whether the arc entered a new phone.
  std::vector<int> back(steps * states, -1);
  std::vector<char> entered(steps * states, 0);
  Vector delta(states, neg_inf), next(states);

  for (std::size_t j = 0; j < phones; ++j) {
    const std::size_t s = inv.first_state(j);
    delta[s] = lm(bigram.initial[j]) + e(0, s);
    entered[s] = 1;
  }

  for (std::size_t t = 1; t < steps; ++t) {
    std::fill(next.begin(), next.end(), neg_inf);
    int* bp = back.data() + t * states;
    char* en = entered.data() + t * states;
    for (std::size_t j = 0; j < phones; ++j) {
      const std::size_t first = inv.first_state(j), last = inv.last_state(j);
      for (std::size_t s = first; s <= last; ++s) {
        double best = neg_inf;
        int arg = -1;
        char via_entry = 0;
        auto offer = [&](double score, std::size_t from, char entry) {
          if (score > best) {
            best = score;
            arg = static_cast<int>(from);
            via_entry = entry;
          }
        };
        if (s > first) {
          // Predecessors inside phone j only.
          offer(delta[s - 1] + move, s - 1, 0);
          offer(delta[s] + stay, s, 0);
        } else {
          for (std::size_t i = 0; i < phones; ++i) {
            if (i == j) offer(delta[s] + stay, s, 0);
            const std::size_t from = inv.last_state(i);
            offer(delta[from] + move + lm(bigram.transition(i, j)), from, 1);
          }
        }
        if (arg >= 0) {
          next[s] = best + e(t, s);
          bp[s] = arg;
          en[s] = via_entry;
        }
      }
    }
    std::swap(delta, next);
  }

  double best = neg_inf;
  int end_state = -1;
  for (std::size_t j = 0; j < phones; ++j) {
    const std::size_t s = inv.last_state(j);
    if (delta[s] > best) {
      best = delta[s];
      end_state = static_cast<int>(s);
    }
  }
  if (end_state < 0) return result;  // no complete path (T shorter than every phone)

  result.log_score = best;
  result.states.assign(steps, 0);
  int s = end_state;
  for (std::size_t t = steps; t-- > 0;) {
    result.states[t] = s;
    if (entered[t * states + static_cast<std::size_t>(s)])
      result.phones.push_back(static_cast<int>(inv.phone_of_state(static_cast<std::size_t>(s))));
    if (t > 0) s = back[t * states + static_cast<std::size_t>(s)];
  }
  std::reverse(result.phones.begin(), result.phones.end());
  return result;
}

/// Self-loop probability from state label sequences: the fraction of
/// transitions that stay in the same state, clamped into [0.05, 0.95].
inline double estimate_self_loop(const std::vector<std::vector<int>>& label_seqs) {
  double same = 0.0, total = 0.0;
  for (const auto& seq : label_seqs)
    for (std::size_t t = 1; t < seq.size(); ++t) {
      same += seq[t] == seq[t - 1] ? 1.0 : 0.0;
      total += 1.0;
    }
  if (total == 0.0) return 0.5;
  return std::clamp(same / total, 0.05, 0.95);
}

}  // namespace ram

#endif  // RAM_DECODE_HPP_
