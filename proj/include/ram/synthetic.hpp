// ram/synthetic.hpp

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

// Synthetic phone corpus with planted speaker variation.
//
// Every phone is a left-to-right HMM whose states emit
//   z = m_state + noise * e,            e ~ N(0, I)
// and speaker s observes
//   x = A_s z + o_s,   A_s = I + distortion * R_s,   o_s = y_s B
// with R_s entries N(0, 1/D), y_s ~ N(0, I_K) and B a K x D basis scaled so
// each coordinate of o_s has standard deviation offset_scale. Transcripts
// follow a random bigram chain without immediate repeats; phone durations are
// uniform in [min_phone_frames, max_phone_frames], cut into per-state runs of
// at least one frame.
//
// Output directory: train/, dev/, test/ corpus directories and speakers.tsv
// ("speaker<TAB>split<TAB>y_1 ... y_K").

#ifndef RAM_SYNTHETIC_HPP_
#define RAM_SYNTHETIC_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ram/corpus.hpp"
#include "ram/decode.hpp"
#include "ram/error.hpp"
#include "ram/linalg.hpp"
#include "ram/matrix.hpp"
#include "ram/rng.hpp"

namespace ram {

struct SyntheticSpec {
  std::size_t num_phones = 12;
  std::size_t states_per_phone = 3;
  std::size_t dim = 13;
  std::size_t train_speakers = 12;
  std::size_t dev_speakers = 4;
  std::size_t test_speakers = 4;
  std::size_t utterances_per_speaker = 8;
  std::size_t min_phones = 8;  // per utterance
  std::size_t max_phones = 14;
  std::size_t min_phone_frames = 6;
  std::size_t max_phone_frames = 15;
  std::size_t subspace_dim = 4;  // K_true
  double mean_scale = 1.5;       // spread of state means
  double noise = 2.0;
  double offset_scale = 3.0;
  double distortion = 0.5;
  std::uint64_t seed = 1;

  std::size_t num_speakers() const { return train_speakers + dev_speakers + test_speakers; }

  void validate() const {
    require(num_phones >= 2, "SyntheticSpec: need at least two phones");
    require(states_per_phone >= 1 && dim >= 1, "SyntheticSpec: counts must be >= 1");
    require(train_speakers >= 1 && dev_speakers >= 1 && test_speakers >= 1,
            "SyntheticSpec: every split needs a speaker");
    require(utterances_per_speaker >= 1, "SyntheticSpec: need utterances");
    require(min_phones >= 1 && min_phones <= max_phones, "SyntheticSpec: bad phone count range");
    require(min_phone_frames >= states_per_phone && min_phone_frames <= max_phone_frames,
            "SyntheticSpec: phone duration range must allow one frame per state");
    require(subspace_dim >= 1 && subspace_dim <= dim, "SyntheticSpec: need 1 <= K_true <= dim");
    require(noise >= 0.0 && offset_scale >= 0.0 && distortion >= 0.0 && mean_scale > 0.0,
            "SyntheticSpec: scales must be nonnegative");
  }
};

/// Symbols drawn from the 48-phone training set that map to themselves in
/// the 39-phone scoring set.
inline const std::vector<std::string>& synthetic_phone_symbols() {
  static const std::vector<std::string> symbols{"aa", "ae", "ah", "aw", "ay", "b",  "ch", "d",  "dh", "eh",
                                                "er", "ey", "f",  "g",  "hh", "ih", "iy", "jh", "k",  "l",
                                                "m",  "n",  "ng", "ow", "oy", "p",  "r",  "s",  "sh", "t",
                                                "th", "uh", "uw", "v",  "w",  "y",  "z",  "sil"};
  return symbols;
}

struct SpeakerTruth {
  std::string id;
  std::string split;
  Vector coords;  // y_s
  Matrix a;       // A_s
  Vector offset;  // o_s
};

struct SyntheticTruth {
  Matrix state_means;  // N x D, clean space
  double noise = 0.0;
  Vector initial;      // phone start probabilities
  Matrix transition;   // phone bigram probabilities
  Matrix basis;        // K x D
  std::vector<SpeakerTruth> speakers;

  const SpeakerTruth& speaker(const std::string& id) const {
    for (const SpeakerTruth& s : speakers)
      if (s.id == id) return s;
    throw ContractError("unknown speaker " + id);
  }

  BigramModel bigram() const {
    BigramModel m{Vector(initial.size()), Matrix(transition.rows(), transition.cols())};
    for (std::size_t j = 0; j < initial.size(); ++j) m.initial[j] = std::log(initial[j]);
    for (std::size_t i = 0; i < transition.rows(); ++i)
      for (std::size_t j = 0; j < transition.cols(); ++j) m.transition(i, j) = std::log(transition(i, j));
    return m;
  }
};

struct SyntheticCorpus {
  Corpus train, dev, test;
  SyntheticTruth truth;
};

namespace detail {

inline std::size_t draw_index(Rng& rng, std::span<const double> probs) {
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return probs.size() - 1;
}

inline std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_index(hi - lo + 1));
}

inline std::string numbered(const char* prefix, std::size_t n, int width) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << n;
  return os.str();
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  require(spec.num_phones <= synthetic_phone_symbols().size(), "SyntheticSpec: too many phones");
  Rng rng(spec.seed);
  const std::size_t dim = spec.dim, states = spec.num_phones * spec.states_per_phone;

  SyntheticCorpus out;
  SyntheticTruth& truth = out.truth;
  std::vector<std::string> symbols(synthetic_phone_symbols().begin(),
                                   synthetic_phone_symbols().begin() + static_cast<std::ptrdiff_t>(spec.num_phones));
  const PhoneInventory inv(symbols, spec.states_per_phone);

  truth.noise = spec.noise;
  truth.state_means = Matrix(states, dim);
  for (double& v : truth.state_means.values()) v = rng.normal(0.0, spec.mean_scale);
  truth.initial.assign(spec.num_phones, 1.0 / static_cast<double>(spec.num_phones));
  truth.transition = Matrix(spec.num_phones, spec.num_phones);
  for (std::size_t i = 0; i < spec.num_phones; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < spec.num_phones; ++j) {
      if (i == j) continue;
      const double u = rng.uniform(0.05, 1.0);
      z += (truth.transition(i, j) = u * u * u);
    }
    for (std::size_t j = 0; j < spec.num_phones; ++j) truth.transition(i, j) /= z;
  }
  truth.basis = Matrix(spec.subspace_dim, dim);
  const double basis_sd = spec.offset_scale / std::sqrt(static_cast<double>(spec.subspace_dim));
  for (double& v : truth.basis.values()) v = rng.normal(0.0, basis_sd);

  const double r_sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t s = 0; s < spec.num_speakers(); ++s) {
    SpeakerTruth sp;
    sp.id = detail::numbered("spk", s + 1, 3);
    sp.split = s < spec.train_speakers ? "train" : s < spec.train_speakers + spec.dev_speakers ? "dev" : "test";
    sp.coords.resize(spec.subspace_dim);
    for (double& v : sp.coords) v = rng.normal();
    sp.a = Matrix::identity(dim);
    for (double& v : sp.a.values()) v += spec.distortion * rng.normal(0.0, r_sd);
    sp.offset.assign(dim, 0.0);
    for (std::size_t k = 0; k < spec.subspace_dim; ++k)
      for (std::size_t d = 0; d < dim; ++d) sp.offset[d] += sp.coords[k] * truth.basis(k, d);
    truth.speakers.push_back(std::move(sp));
  }

  for (const SpeakerTruth& sp : truth.speakers) {
    Corpus& split = sp.split == "train" ? out.train : sp.split == "dev" ? out.dev : out.test;
    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      Utterance utt;
      utt.id = sp.id + "_" + detail::numbered("u", u + 1, 2);
      utt.speaker = sp.id;
      std::vector<int> phones;
      const std::size_t length = detail::draw_between(rng, spec.min_phones, spec.max_phones);
      phones.push_back(static_cast<int>(detail::draw_index(rng, truth.initial)));
      while (phones.size() < length)
        phones.push_back(
            static_cast<int>(detail::draw_index(rng, truth.transition.row(static_cast<std::size_t>(phones.back())))));
      for (int p : phones) {
        const std::size_t frames = detail::draw_between(rng, spec.min_phone_frames, spec.max_phone_frames);
        // Cut `frames` into states_per_phone positive runs.
        std::vector<std::size_t> cuts{0, frames};
        while (cuts.size() < spec.states_per_phone + 1) {
          const std::size_t c = 1 + rng.uniform_index(frames - 1);
          if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t k = 0; k < spec.states_per_phone; ++k)
          for (std::size_t t = cuts[k]; t < cuts[k + 1]; ++t)
            utt.labels.push_back(static_cast<int>(inv.first_state(static_cast<std::size_t>(p)) + k));
      }
      utt.transcript = inv.decode(phones);
      utt.frames = Matrix(utt.labels.size(), dim);
      Vector z(dim);
      for (std::size_t t = 0; t < utt.labels.size(); ++t) {
        const std::size_t state = static_cast<std::size_t>(utt.labels[t]);
        for (std::size_t d = 0; d < dim; ++d) z[d] = truth.state_means(state, d) + spec.noise * rng.normal();
        for (std::size_t i = 0; i < dim; ++i) {
          double v = sp.offset[i];
          for (std::size_t j = 0; j < dim; ++j) v += sp.a(i, j) * z[j];
          utt.frames(t, i) = v;
        }
      }
      split.utterances.push_back(std::move(utt));
    }
  }
  out.train.phones = out.dev.phones = out.test.phones = inv;
  return out;
}

/// Log-likelihood of every state for every frame under the true model of
/// `speaker` (T x N), up to a per-frame constant.
inline Matrix oracle_state_loglik(const SyntheticTruth& truth, const std::string& speaker, const Matrix& frames) {
  const SpeakerTruth& sp = truth.speaker(speaker);
  const Matrix inv = inverse(sp.a);
  const std::size_t dim = frames.cols(), states = truth.state_means.rows();
  const double var = std::max(truth.noise * truth.noise, 1e-12);
  Matrix out(frames.rows(), states);
  Vector z(dim);
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < dim; ++j) v += inv(i, j) * (frames(t, j) - sp.offset[j]);
      z[i] = v;
    }
    for (std::size_t s = 0; s < states; ++s) {
      double q = 0.0;
      for (std::size_t d = 0; d < dim; ++d) q += (z[d] - truth.state_means(s, d)) * (z[d] - truth.state_means(s, d));
      out(t, s) = -0.5 * q / var;
    }
  }
  return out;
}

inline void write_speakers(std::ostream& os, const SyntheticTruth& truth) {
  os.precision(17);
  for (const SpeakerTruth& sp : truth.speakers) {
    os << sp.id << '\t' << sp.split;
    for (double v : sp.coords) os << '\t' << v;
    os << '\n';
  }
}

inline void write_synthetic_corpus(const std::filesystem::path& root, const SyntheticCorpus& c) {
  save_corpus(root / "train", c.train);
  save_corpus(root / "dev", c.dev);
  save_corpus(root / "test", c.test);
  std::ofstream os(root / "speakers.tsv");
  if (!os) throw IoError("cannot write " + (root / "speakers.tsv").string());
  write_speakers(os, c.truth);
}

}  // namespace ram

#endif  // RAM_SYNTHETIC_HPP_
