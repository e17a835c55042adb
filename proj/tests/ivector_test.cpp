// tests/ivector_test.cpp

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
#include <numeric>
#include <sstream>
#include <vector>

#include "cca.hpp"
#include "ram/gmm.hpp"
#include "ram/ivector.hpp"

namespace ram {
namespace {

GmmModel four_corners() {
  return GmmModel{{0.1, 0.2, 0.3, 0.4},
                  Matrix::from_rows({{0, 0}, {8, 0}, {0, 8}, {8, 8}}),
                  Matrix::from_rows({{1, 1}, {0.5, 2}, {2, 0.5}, {1, 1}})};
}

Matrix random_frames(Rng& rng, std::size_t n, std::size_t dim) {
  Matrix m(n, dim);
  for (double& v : m.values()) v = rng.normal() + (rng.bernoulli(0.3) ? 4.0 : 0.0);
  return m;
}

GmmModel small_ubm(Rng& rng, std::size_t c, std::size_t dim) {
  GmmModel g{Vector(c, 1.0 / static_cast<double>(c)), Matrix(c, dim), Matrix(c, dim)};
  for (double& v : g.means.values()) v = rng.normal(0.0, 3.0);
  for (double& v : g.variances.values()) v = rng.uniform(0.5, 2.0);
  return g;
}

TEST(Ubm, SingleComponentIsSampleMoments) {
  Rng rng(1);
  const Matrix x = random_frames(rng, 500, 3);
  const GmmModel g = train_ubm(x, 1, 5, rng).model;
  for (std::size_t d = 0; d < 3; ++d) {
    double mean = 0.0, var = 0.0;
    for (std::size_t t = 0; t < x.rows(); ++t) mean += x(t, d);
    mean /= 500.0;
    for (std::size_t t = 0; t < x.rows(); ++t) var += (x(t, d) - mean) * (x(t, d) - mean);
    var /= 500.0;
    EXPECT_NEAR(g.means(0, d), mean, 1e-10);
    EXPECT_NEAR(g.variances(0, d), var, 1e-10);
  }
  EXPECT_EQ(g.weights[0], 1.0);
}

TEST(Ubm, RecoversPlantedFourComponentMixture) {
  Rng rng(2);
  const GmmModel truth = four_corners();
  const Matrix x = sample_gmm(truth, 8000, rng);
  const GmmModel g = train_ubm(x, 4, 20, rng).model;
  std::vector<std::size_t> perm{0, 1, 2, 3};
  double best = INFINITY;
  do {
    double err = 0.0;
    for (std::size_t c = 0; c < 4; ++c)
      err += std::hypot(g.means(perm[c], 0) - truth.means(c, 0), g.means(perm[c], 1) - truth.means(c, 1));
    best = std::min(best, err / 4.0);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_LT(best, 0.1);
}

TEST(Ubm, LogLikelihoodIsMonotone) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    Rng rng(seed);
    const Matrix x = random_frames(rng, 1500, 4);
    const auto r = train_ubm(x, 8, 10, rng);
    ASSERT_EQ(r.log_likelihood.size(), 11u);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
      EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1] - 1e-8) << "seed " << seed << " iteration " << i;
  }
}

TEST(Ubm, VarianceFloorHolds) {
  Rng rng(6);
  Matrix x(400, 2);
  for (std::size_t t = 0; t < 400; ++t) {
    x(t, 0) = rng.normal();
    x(t, 1) = t < 200 ? 0.0 : 1.0;  // clusters with zero spread in dim 1
  }
  const Vector floor = variance_floor(x);
  const GmmModel g = train_ubm(x, 4, 10, rng).model;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_GE(g.variances(c, d), floor[d]);
  EXPECT_NO_THROW(g.validate());
}

TEST(Ubm, RejectsBadRequests) {
  Rng rng(7);
  EXPECT_THROW(train_ubm(Matrix(0, 2), 1, 1, rng), ContractError);
  EXPECT_THROW(train_ubm(Matrix(3, 2), 4, 1, rng), ContractError);
}

TEST(Ubm, FileRoundTrip) {
  std::stringstream ss;
  write_gmm(ss, four_corners());
  const GmmModel back = read_gmm(ss);
  EXPECT_EQ(back.weights, four_corners().weights);
  EXPECT_EQ(back.means, four_corners().means);
  EXPECT_EQ(back.variances, four_corners().variances);
  std::stringstream bad("RAM-GMX");
  EXPECT_THROW(read_gmm(bad), IoError);
}

TEST(Stats, OccupancySumsToFrameCount) {
  Rng rng(8);
  const GmmModel ubm = small_ubm(rng, 5, 3);
  const Matrix x = random_frames(rng, 137, 3);
  EXPECT_NEAR(accumulate_stats(ubm, x).total(), 137.0, 1e-8);
  EXPECT_THROW(accumulate_stats(ubm, Matrix(4, 2)), ContractError);
}

TEST(Stats, FrameAtDominantMeanHasZeroFirstOrder) {
  GmmModel ubm = four_corners();
  ubm.means *= 10.0;
  const Matrix x = Matrix::from_rows({{80, 80}});
  const BwStats s = accumulate_stats(ubm, x);
  EXPECT_NEAR(s.n[3], 1.0, 1e-9);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(s.f(c, d), 0.0, 1e-8);
}

TEST(Stats, AdditiveUnderConcatenation) {
  Rng rng(9);
  const GmmModel ubm = small_ubm(rng, 6, 2);
  const Matrix a = random_frames(rng, 40, 2), b = random_frames(rng, 70, 2);
  const Matrix parts[] = {a, b};
  BwStats sum = accumulate_stats(ubm, a);
  sum += accumulate_stats(ubm, b);
  const BwStats whole = accumulate_stats(ubm, vstack(parts));
  for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(whole.n[c], sum.n[c], 1e-10);
  EXPECT_LT(max_abs_diff(whole.f, sum.f), 1e-10);
}

TEST(Stats, Saturation) {
  BwStats s(2, 1);
  s.n = {20.0, 30.0};
  s.f = Matrix::from_rows({{1.0}, {-2.0}});
  const BwStats same = saturate_stats(s, 600.0);
  EXPECT_EQ(same.n, s.n);
  EXPECT_EQ(same.f, s.f);
  s.n = {400.0, 800.0};
  const BwStats half = saturate_stats(s, 600.0);
  EXPECT_EQ(half.n, (Vector{200.0, 400.0}));
  EXPECT_EQ(half.f, Matrix::from_rows({{0.5}, {-1.0}}));
  EXPECT_THROW(saturate_stats(s, 0.0), ContractError);
}

TEST(Stats, SaturationBoundAndIdempotence) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    BwStats s(4, 2);
    for (double& v : s.n) v = rng.uniform(0.0, 500.0);
    for (double& v : s.f.values()) v = rng.normal(0.0, 50.0);
    const double cap = rng.uniform(1.0, 1500.0);
    const BwStats once = saturate_stats(s, cap);
    EXPECT_LE(once.total(), cap * (1.0 + 1e-12));
    const BwStats twice = saturate_stats(once, cap);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(twice.n[c], once.n[c], 1e-9);
    EXPECT_LT(max_abs_diff(twice.f, once.f), 1e-9);
  }
}

IVectorExtractor random_extractor(Rng& rng, std::size_t c, std::size_t dim, std::size_t k) {
  Matrix t(c * dim, k);
  for (double& v : t.values()) v = rng.normal();
  return IVectorExtractor(small_ubm(rng, c, dim), t);
}

TEST(Extract, ZeroStatsGivePriorMean) {
  Rng rng(11);
  const IVectorExtractor ext = random_extractor(rng, 4, 3, 2);
  EXPECT_EQ(extract_ivector(ext, BwStats(4, 3)), Vector(2, 0.0));
  EXPECT_THROW(extract_ivector(ext, BwStats(3, 3)), ContractError);
}

TEST(Extract, ScalarFormulaWhenKIsOne) {
  // C = 2, D = 1:  w = sum_c t_c f_c / s_c  /  (1 + sum_c n_c t_c^2 / s_c)
  const GmmModel ubm{{0.5, 0.5}, Matrix::from_rows({{0.0}, {1.0}}), Matrix::from_rows({{2.0}, {0.5}})};
  const IVectorExtractor ext(ubm, Matrix::from_rows({{0.3}, {-1.5}}));
  BwStats s(2, 1);
  s.n = {3.0, 5.0};
  s.f = Matrix::from_rows({{1.2}, {-0.7}});
  const double want = (0.3 * 1.2 / 2.0 + -1.5 * -0.7 / 0.5) / (1.0 + 3.0 * 0.09 / 2.0 + 5.0 * 2.25 / 0.5);
  EXPECT_NEAR(extract_ivector(ext, s)[0], want, 1e-10);
}

TEST(Extract, MoreEvidenceMovesFurtherTheSameWay) {
  Rng rng(12);
  const IVectorExtractor ext = random_extractor(rng, 4, 3, 3);
  const Matrix x = random_frames(rng, 30, 3);
  const BwStats once = accumulate_stats(ext.ubm(), x);
  BwStats twice = once;
  twice += once;
  const Vector a = extract_ivector(ext, once), b = extract_ivector(ext, twice);
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  EXPECT_GT(nb, na);
  EXPECT_GT(dot(a, b) / (na * nb), 0.9);
}

TEST(Extractor, ObjectiveNeverDecreases) {
  Rng rng(13);
  const GmmModel ubm = small_ubm(rng, 6, 3);
  std::vector<BwStats> stats;
  for (int s = 0; s < 15; ++s) stats.push_back(accumulate_stats(ubm, random_frames(rng, 80, 3)));
  const auto r = train_extractor(ubm, stats, 3, 10, rng);
  ASSERT_EQ(r.objective.size(), 11u);
  for (std::size_t i = 1; i < r.objective.size(); ++i)
    EXPECT_GE(r.objective[i], r.objective[i - 1] - 1e-8 * std::abs(r.objective[i - 1])) << i;
  EXPECT_DOUBLE_EQ(r.objective.back(), extractor_objective(r.extractor, stats));
}

TEST(Extractor, RankOneSingleSpeakerMatchesScalarProjection) {
  Rng rng(14);
  const GmmModel ubm = small_ubm(rng, 3, 2);
  const std::vector<BwStats> stats{accumulate_stats(ubm, random_frames(rng, 200, 2))};
  const auto r = train_extractor(ubm, stats, 1, 200, rng);
  const double last = r.objective.back(), prev = r.objective[r.objective.size() - 2];
  EXPECT_LT(std::abs(last - prev), 1e-6 * std::max(1.0, std::abs(last)));
  const Matrix& t = r.extractor.t();
  double num = 0.0, den = 1.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t d = 0; d < 2; ++d) {
      const double tc = t(c * 2 + d, 0), var = ubm.variances(c, d);
      num += tc * stats[0].f(c, d) / var;
      den += stats[0].n[c] * tc * tc / var;
    }
  EXPECT_NEAR(extract_ivector(r.extractor, stats[0])[0], num / den, 1e-6);
}

TEST(Extractor, RejectsDegenerateInput) {
  Rng rng(15);
  const GmmModel ubm = small_ubm(rng, 2, 2);
  const std::vector<BwStats> zero(3, BwStats(2, 2));
  EXPECT_THROW(train_extractor(ubm, zero, 1, 1, rng), ContractError);
  EXPECT_THROW(train_extractor(ubm, std::vector<BwStats>{}, 1, 1, rng), ContractError);
}

TEST(Extractor, RecoversPlantedSpeakerSubspace) {
  Rng rng(16);
  const std::size_t dim = 4, planted = 2, speakers = 30;
  const GmmModel world = small_ubm(rng, 8, dim);
  Matrix basis(planted, dim);
  for (double& v : basis.values()) v = rng.normal();
  Matrix coords(speakers, planted);
  for (double& v : coords.values()) v = rng.normal();
  std::vector<Matrix> data;
  for (std::size_t s = 0; s < speakers; ++s) {
    Matrix x = sample_gmm(world, 300, rng);
    const Matrix shift = matmul(Matrix::row_vector(coords.row(s)), basis);
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t d = 0; d < dim; ++d) x(t, d) += shift(0, d);
    data.push_back(std::move(x));
  }
  const GmmModel ubm = train_ubm(vstack(data), 8, 10, rng).model;
  std::vector<BwStats> stats;
  for (const Matrix& x : data) stats.push_back(accumulate_stats(ubm, x));
  const IVectorExtractor ext = train_extractor(ubm, stats, planted, 10, rng).extractor;
  Matrix ivecs(speakers, planted);
  for (std::size_t s = 0; s < speakers; ++s) ivecs.set_row(s, extract_ivector(ext, stats[s]));
  EXPECT_GT(testing::mean_canonical_correlation(ivecs, coords), 0.7);
}

TEST(Online, SingleChunkEqualsOffline) {
  Rng rng(17);
  const IVectorExtractor ext = random_extractor(rng, 5, 2, 3);
  const Matrix x = random_frames(rng, 53, 2);
  const OnlineIvectors on = extract_online(ext, x, 53, 600.0);
  ASSERT_EQ(on.chunks.size(), 1u);
  EXPECT_EQ(on.final, extract_ivector(ext, saturate_stats(accumulate_stats(ext.ubm(), x), 600.0)));
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(on.per_frame(t, k), 0.0);
}

TEST(Online, StreamedFinalMatchesBatch) {
  Rng rng(18);
  const IVectorExtractor ext = random_extractor(rng, 6, 3, 4);
  for (int u = 0; u < 50; ++u) {
    const Matrix x = random_frames(rng, 20 + rng.uniform_index(200), 3);
    const double cap = u % 2 ? 600.0 : 50.0;  // exercise saturation too
    const Vector batch = extract_ivector(ext, saturate_stats(accumulate_stats(ext.ubm(), x), cap));
    const OnlineIvectors on = extract_online(ext, x, 10, cap);
    EXPECT_EQ(on.chunks.size(), (x.rows() + 9) / 10);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(on.final[k], batch[k], 1e-10);
  }
}

TEST(Online, PerFrameVectorsAreCausal) {
  Rng rng(19);
  const IVectorExtractor ext = random_extractor(rng, 4, 2, 2);
  const Matrix x = random_frames(rng, 45, 2);
  const OnlineIvectors full = extract_online(ext, x, 10);
  const OnlineIvectors prefix = extract_online(ext, row_slice(x, 0, 23), 10);
  for (std::size_t t = 0; t < 23; ++t)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(full.per_frame(t, k), prefix.per_frame(t, k));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(full.per_frame(15, k), full.chunks[0][k]);
    EXPECT_EQ(full.per_frame(44, k), full.chunks[3][k]);
  }
  EXPECT_THROW(extract_online(ext, Matrix(0, 2), 10), ContractError);
  EXPECT_THROW(extract_online(ext, x, 0), ContractError);
}

TEST(Online, CarriedStatisticsContinueTheStream) {
  Rng rng(20);
  const IVectorExtractor ext = random_extractor(rng, 4, 2, 2);
  const Matrix a = random_frames(rng, 30, 2), b = random_frames(rng, 25, 2);
  const Matrix parts[] = {a, b};
  const OnlineIvectors first = extract_online(ext, a, 10);
  const OnlineIvectors second = extract_online(ext, b, 10, kDefaultMaxCount, &first.stats);
  const OnlineIvectors joined = extract_online(ext, vstack(parts), 10);
  EXPECT_EQ(second.final, joined.final);
  EXPECT_EQ(second.per_frame(0, 0), first.final[0]);
}

TEST(PseudoSpeakers, PairsWithinSpeakerInOrder) {
  const auto four = make_pseudo_speakers({"a", "a", "a", "a"});
  EXPECT_EQ(four, (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}}));
  const auto five = make_pseudo_speakers({"a", "a", "a", "a", "a"});
  EXPECT_EQ(five, (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
}

TEST(PseudoSpeakers, NeverCrossSpeakers) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> spk;
    for (std::size_t u = 0, n = rng.uniform_index(30); u < n; ++u) spk.push_back(std::string(1, 'a' + rng.uniform_index(4)));
    const auto groups = make_pseudo_speakers(spk);
    std::vector<int> seen(spk.size(), 0);
    for (const auto& g : groups) {
      ASSERT_FALSE(g.empty());
      ASSERT_LE(g.size(), 2u);
      for (std::size_t u : g) {
        EXPECT_EQ(spk[u], spk[g[0]]);
        ++seen[u];
      }
      if (g.size() == 2) {
        EXPECT_LT(g[0], g[1]);
      }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(ExtractorIo, RoundTrips) {
  Rng rng(22);
  const IVectorExtractor ext = random_extractor(rng, 3, 2, 2);
  std::stringstream ss;
  write_extractor(ss, ext);
  const IVectorExtractor back = read_extractor(ss);
  EXPECT_EQ(back.t(), ext.t());
  EXPECT_EQ(back.ubm().means, ext.ubm().means);

  const IvectorTable rows{{"spk1", {0.25, -1.0 / 3.0}}, {"spk2", {1e-300, 7.0}}};
  std::stringstream ts;
  write_ivectors(ts, rows);
  EXPECT_EQ(read_ivectors(ts), rows);
  std::stringstream ragged("a\t1\t2\nb\t1\n");
  EXPECT_THROW(read_ivectors(ragged), IoError);
}

}  // namespace
}  // namespace ram
