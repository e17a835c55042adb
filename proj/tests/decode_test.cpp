// tests/decode_test.cpp

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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "decode_fixtures.hpp"
#include "oracles.hpp"
#include "ram/decode.hpp"
#include "ram/score.hpp"

namespace ram {
namespace {

using testing::DecodeInstance;
using testing::random_instance;

TEST(Bigram, CountsAlternatingSequence) {
  const BigramModel m = build_bigram({{0, 1, 0, 1}}, 2, 1e-6);
  EXPECT_NEAR(std::exp(m.transition(0, 1)), 1.0, 1e-5);
  EXPECT_NEAR(std::exp(m.transition(1, 0)), 1.0, 1e-5);
  EXPECT_NEAR(std::exp(m.initial[0]), 1.0, 1e-5);
}

TEST(Bigram, EmptyDataRejected) {
  EXPECT_THROW(build_bigram({}, 3, 1.0), ContractError);
  EXPECT_THROW(build_bigram({{}}, 3, 1.0), ContractError);
  EXPECT_THROW(build_bigram({{0, 1}}, 3, 0.0), ContractError);
}

TEST(Bigram, RowsNormalizeOnRandomCorpora) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t phones = 1 + rng.uniform_index(10);
    std::vector<std::vector<int>> corpus(1 + rng.uniform_index(5));
    for (auto& seq : corpus)
      for (std::size_t k = 0, n = 1 + rng.uniform_index(20); k < n; ++k)
        seq.push_back(static_cast<int>(rng.uniform_index(phones)));
    const BigramModel m = build_bigram(corpus, phones, rng.uniform(0.01, 2.0));
    double s = 0.0;
    for (double v : m.initial) s += std::exp(v);
    EXPECT_NEAR(s, 1.0, 1e-10);
    for (std::size_t i = 0; i < phones; ++i) {
      s = 0.0;
      for (double v : m.transition.row(i)) s += std::exp(v);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(Bigram, FileRoundTrip) {
  const PhoneInventory inv({"a", "b", "c"}, 1);
  const BigramModel m = build_bigram({{0, 2, 1, 1}}, 3, 0.5);
  std::stringstream ss;
  write_bigram(ss, m, inv);
  const BigramModel back = read_bigram(ss, inv);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(back.initial[j], m.initial[j]);
  EXPECT_EQ(back.transition, m.transition);
  std::stringstream bad("a\tq\t-1\n");
  EXPECT_THROW(read_bigram(bad, inv), IoError);
}

TEST(Viterbi, SingleFrameSingleStateIsArgmax) {
  const PhoneInventory inv({"a", "b", "c"}, 1);
  const Matrix post = Matrix::from_rows({{0.2, 0.5, 0.3}});
  const Vector priors{std::log(0.1), std::log(0.6), std::log(0.3)};
  BigramModel lm = uniform_bigram(3);
  lm.initial = {std::log(0.2), std::log(0.3), std::log(0.5)};
  // Scores: log 2 + log .2, log(5/6) + log .3, log 1 + log .5
  const auto r = viterbi_decode(post, priors, lm, inv);
  ASSERT_EQ(r.phones.size(), 1u);
  EXPECT_EQ(r.phones[0], 2);
  EXPECT_NEAR(r.log_score, std::log(0.5), 1e-12);
}

TEST(Viterbi, UniformInputsPickLowestIndexPath) {
  for (std::size_t states : {1u, 2u, 3u}) {
    const PhoneInventory inv({"a", "b", "c", "d"}, states);
    const Matrix post(9, inv.num_states(), 1.0 / static_cast<double>(inv.num_states()));
    const Vector priors(inv.num_states(), -std::log(static_cast<double>(inv.num_states())));
    const auto r = viterbi_decode(post, priors, uniform_bigram(4), inv);
    ASSERT_FALSE(r.phones.empty());
    for (int p : r.phones) EXPECT_EQ(p, 0);
  }
}

TEST(Viterbi, MatchesExhaustiveEnumeration) {
  Rng rng(2024);
  std::size_t cases = 0, unique = 0;
  for (std::size_t phones = 1; phones <= 4; ++phones)
    for (std::size_t states = 1; states <= 2; ++states)
      for (std::size_t steps = 1; steps <= 6; ++steps)
        for (int rep = 0; rep < 40; ++rep) {
          const DecodeInstance inst = random_instance(rng, phones, states, steps);
          const auto got = viterbi_decode(inst.posteriors, inst.log_priors, inst.bigram, inst.inventory, inst.options);
          const auto want = oracle::brute_force_decode(inst.emission_grid(), phones, states, inst.bigram.initial,
                                                       oracle::to_grid(inst.bigram.transition),
                                                       inst.options.lm_weight, inst.options.self_loop);
          ++cases;
          if (want.best_sequences.empty()) {
            EXPECT_TRUE(got.phones.empty());
            continue;
          }
          ASSERT_EQ(got.log_score, want.best);
          if (want.best_sequences.size() == 1) {
            ++unique;
            ASSERT_EQ(got.phones, want.best_sequences[0]);
          } else {
            EXPECT_NE(std::find(want.best_sequences.begin(), want.best_sequences.end(), got.phones),
                      want.best_sequences.end());
          }
        }
  EXPECT_GE(cases, 1900u);
  EXPECT_GT(unique, cases / 2);
}

TEST(Viterbi, ZeroLmWeightIgnoresBigram) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    DecodeInstance inst = random_instance(rng, 3, 2, 6);
    inst.options.lm_weight = 0.0;
    const auto a = viterbi_decode(inst.posteriors, inst.log_priors, inst.bigram, inst.inventory, inst.options);
    // Oracle without any bigram term at all.
    const oracle::Grid flat(3, std::vector<double>(3, 0.0));
    const auto want = oracle::brute_force_decode(inst.emission_grid(), 3, 2, std::vector<double>(3, 0.0), flat, 1.0,
                                                 inst.options.self_loop);
    if (want.best_sequences.empty()) continue;
    EXPECT_EQ(a.log_score, want.best);
    if (want.best_sequences.size() == 1) {
      EXPECT_EQ(a.phones, want.best_sequences[0]);
    }
  }
}

TEST(Viterbi, DeterministicAndValidated) {
  Rng rng(6);
  const DecodeInstance inst = random_instance(rng, 4, 3, 20);
  const auto a = viterbi_decode(inst.posteriors, inst.log_priors, inst.bigram, inst.inventory, inst.options);
  const auto b = viterbi_decode(inst.posteriors, inst.log_priors, inst.bigram, inst.inventory, inst.options);
  EXPECT_EQ(a.phones, b.phones);
  EXPECT_EQ(a.states, b.states);
  Vector bad_priors = inst.log_priors;
  bad_priors[1] = -INFINITY;
  EXPECT_THROW(viterbi_decode(inst.posteriors, bad_priors, inst.bigram, inst.inventory), ContractError);
  EXPECT_THROW(viterbi_decode(Matrix(3, 5), inst.log_priors, inst.bigram, inst.inventory), ContractError);
}

TEST(MapPhones, IdentityAndCollapse) {
  const std::vector<std::string> seq{"a", "b", "a"};
  EXPECT_EQ(map_phones(seq, PhoneMap::identity({"a", "b"})), seq);
  PhoneMap m;
  m.set("a", "x");
  m.set("b", "x");
  EXPECT_EQ(map_phones(seq, m), std::vector<std::string>{"x"});
  EXPECT_EQ(map_phones(seq, m, false), (std::vector<std::string>{"x", "x", "x"}));
  m = PhoneMap();
  m.set("a", "a");
  m.set("b", "-");
  EXPECT_EQ(map_phones(seq, m), std::vector<std::string>{"a"});
  EXPECT_THROW(map_phones({"q"}, m), ContractError);
}

TEST(MapPhones, BundledTableCoversThirtyNineOutputs) {
  const PhoneMap m = load_phone_map(RAM_DATA_DIR "/48to39.tsv");
  EXPECT_EQ(m.size(), 48u);
  EXPECT_EQ(m.outputs().size(), 39u);
  EXPECT_EQ(*m("zh"), "sh");
  EXPECT_EQ(*m("epi"), "sil");
}

TEST(Per, TrivialCases) {
  const Transcripts ref{{"u1", {"a", "b", "c"}}, {"u2", {"d"}}};
  EXPECT_EQ(compute_per(ref, ref).per(), 0.0);
  const Transcripts empty{{"u1", {}}, {"u2", {}}};
  EXPECT_EQ(compute_per(ref, empty).per(), 100.0);
  EXPECT_EQ(compute_per(ref, empty).total.deletions, 4u);
  const Transcripts wrong_ids{{"u1", {}}, {"u3", {}}};
  EXPECT_THROW(compute_per(ref, wrong_ids), ContractError);
}

TEST(Per, AlignmentSplit) {
  const EditCounts c = align({"a", "b", "c", "d"}, {"a", "x", "c", "d", "e"});
  EXPECT_EQ(c.substitutions, 1u);
  EXPECT_EQ(c.deletions, 0u);
  EXPECT_EQ(c.insertions, 1u);
}

TEST(Per, MatchesMemoizedRecursionOracle) {
  Rng rng(77);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
  for (int pair = 0; pair < 100; ++pair) {
    std::vector<std::string> a, b;
    for (std::size_t k = 0, n = rng.uniform_index(15); k < n; ++k) a.push_back(alphabet[rng.uniform_index(5)]);
    for (std::size_t k = 0, n = rng.uniform_index(15); k < n; ++k) b.push_back(alphabet[rng.uniform_index(5)]);
    const EditCounts c = align(a, b);
    EXPECT_EQ(static_cast<int>(c.errors()), oracle::EditDistance(a, b)());
    EXPECT_EQ(c.reference_length + c.insertions - c.deletions, b.size());
  }
}

TEST(Per, InvariantToUtteranceOrder) {
  Rng rng(8);
  std::vector<std::pair<std::string, std::vector<std::string>>> refs, hyps;
  for (int u = 0; u < 20; ++u) {
    std::vector<std::string> r, h;
    for (int k = 0; k < 8; ++k) r.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(4))));
    for (int k = 0; k < 7; ++k) h.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(4))));
    refs.emplace_back("u" + std::to_string(u), r);
    hyps.emplace_back("u" + std::to_string(u), h);
  }
  const double base = compute_per(Transcripts(refs.begin(), refs.end()), Transcripts(hyps.begin(), hyps.end())).per();
  std::reverse(refs.begin(), refs.end());
  std::stringstream rs, hs;
  for (const auto& [id, seq] : refs) rs << id << '\t' << join_phones(seq) << '\n';
  for (const auto& [id, seq] : hyps) hs << id << '\t' << join_phones(seq) << '\n';
  EXPECT_EQ(compute_per(read_transcripts(rs), read_transcripts(hs)).per(), base);
}

}  // namespace
}  // namespace ram
