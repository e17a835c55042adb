// ram/fmllr.hpp

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

// Feature-space MLLR against a diagonal GMM.
//
// With W = [A b] (D x D+1), x~ = [x; 1] and posteriors gamma_t(c):
//   beta = sum_t sum_c gamma_t(c)
//   G_i  = sum_t sum_c gamma_t(c) / var_ci * x~ x~'
//   k_i  = sum_t sum_c gamma_t(c) mu_ci / var_ci * x~
//   Q(W) = beta log|det A| - 1/2 sum_i (w_i' G_i w_i - 2 w_i' k_i + const_i)
// which equals beta log|det A| - 1/2 sum_t sum_c gamma_t(c) |Sigma_c^-1/2 (A x_t + b - mu_c)|^2.
//
// Row update (row i, others fixed): let p be column i of A^-1 padded with a
// zero, so p' w_i = det(A_new) / det(A_old). The maximizer is
//   w_i = G_i^-1 (alpha p + k_i),   a alpha^2 + e alpha - beta = 0,
// with a = p' G_i^-1 p and e = p' G_i^-1 k_i; of the two roots the one with
// the larger Q is kept. Each update maximizes Q over its row exactly.
//
// trans.bin holds one or more records. Each record is "RAM-FMLLR", u32 D,
// A (D x D Matrix), b (1 x D Matrix), then u32 key length and the key bytes.

#ifndef RAM_FMLLR_HPP_
#define RAM_FMLLR_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/gmm.hpp"
#include "ram/linalg.hpp"
#include "ram/matrix.hpp"
#include "ram/matrix_io.hpp"
#include "ram/numerics.hpp"

namespace ram {

inline constexpr std::string_view kFmllrMagic = "RAM-FMLLR";
inline constexpr double kMinAbsDeterminant = 1e-12;

struct FmllrTransform {
  Matrix a;  // D x D
  Vector b;  // D

  static FmllrTransform identity(std::size_t dim) { return {Matrix::identity(dim), Vector(dim, 0.0)}; }
  std::size_t dim() const { return b.size(); }

  void validate() const {
    require(a.rows() == b.size() && a.cols() == b.size(), "FmllrTransform: A must be D x D with b of length D");
    require(std::abs(determinant(a)) > kMinAbsDeterminant, "FmllrTransform: A is not invertible");
  }
};

inline Matrix apply_fmllr(const FmllrTransform& t, const Matrix& frames) {
  require(frames.cols() == t.dim(), "apply_fmllr: feature dim != transform dim");
  const std::size_t dim = t.dim();
  Matrix out(frames.rows(), dim);
  for (std::size_t r = 0; r < frames.rows(); ++r)
    for (std::size_t i = 0; i < dim; ++i) {
      double s = t.b[i];
      for (std::size_t j = 0; j < dim; ++j) s += t.a(i, j) * frames(r, j);
      out(r, i) = s;
    }
  return out;
}

/// outer after inner: x -> A_o (A_i x + b_i) + b_o.
inline FmllrTransform compose(const FmllrTransform& outer, const FmllrTransform& inner) {
  require(outer.dim() == inner.dim(), "compose: dimension mismatch");
  FmllrTransform out{matmul(outer.a, inner.a), outer.b};
  for (std::size_t i = 0; i < out.dim(); ++i)
    for (std::size_t j = 0; j < out.dim(); ++j) out.b[i] += outer.a(i, j) * inner.b[j];
  return out;
}

struct FmllrStats {
  double beta = 0.0;
  std::vector<Matrix> g;  // D of (D+1) x (D+1)
  std::vector<Vector> k;  // D of D+1
  Vector constant;        // D

  explicit FmllrStats(std::size_t dim = 0)
      : g(dim, Matrix(dim + 1, dim + 1)), k(dim, Vector(dim + 1, 0.0)), constant(dim, 0.0) {}
  std::size_t dim() const { return g.size(); }

  FmllrStats& operator+=(const FmllrStats& o) {
    require(o.dim() == dim(), "FmllrStats: dimension mismatch");
    beta += o.beta;
    for (std::size_t i = 0; i < dim(); ++i) {
      g[i] += o.g[i];
      for (std::size_t j = 0; j <= dim(); ++j) k[i][j] += o.k[i][j];
      constant[i] += o.constant[i];
    }
    return *this;
  }
};

inline FmllrStats accumulate_fmllr_stats(const GmmModel& gmm, const Matrix& frames, const Matrix& posteriors) {
  const std::size_t dim = gmm.dim(), cc = gmm.num_components();
  require(frames.cols() == dim, "estimate_fmllr: feature dim != GMM dim");
  require(posteriors.rows() == frames.rows() && posteriors.cols() == cc,
          "estimate_fmllr: posteriors must be frames x components");
  FmllrStats s(dim);
  Vector xt(dim + 1, 1.0), scale(dim), target(dim), quad(dim);
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    std::fill(scale.begin(), scale.end(), 0.0);
    std::fill(target.begin(), target.end(), 0.0);
    std::fill(quad.begin(), quad.end(), 0.0);
    for (std::size_t c = 0; c < cc; ++c) {
      const double p = posteriors(t, c);
      if (p == 0.0) continue;
      s.beta += p;
      for (std::size_t i = 0; i < dim; ++i) {
        const double w = p / gmm.variances(c, i), mu = gmm.means(c, i);
        scale[i] += w;
        target[i] += w * mu;
        quad[i] += w * mu * mu;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) xt[j] = frames(t, j);
    for (std::size_t i = 0; i < dim; ++i) {
      Matrix& g = s.g[i];
      for (std::size_t r = 0; r <= dim; ++r) {
        const double sr = scale[i] * xt[r];
        for (std::size_t c = 0; c <= dim; ++c) g(r, c) += sr * xt[c];
        s.k[i][r] += target[i] * xt[r];
      }
      s.constant[i] += quad[i];
    }
  }
  return s;
}

/// Q(A, b) from the accumulated statistics.
inline double fmllr_objective(const FmllrStats& s, const FmllrTransform& t) {
  const std::size_t dim = s.dim();
  const double det = determinant(t.a);
  if (det == 0.0) return -std::numeric_limits<double>::infinity();
  double q = s.beta * std::log(std::abs(det));
  Vector w(dim + 1);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) w[j] = t.a(i, j);
    w[dim] = t.b[i];
    double quad = 0.0;
    for (std::size_t r = 0; r <= dim; ++r)
      for (std::size_t c = 0; c <= dim; ++c) quad += w[r] * s.g[i](r, c) * w[c];
    q -= 0.5 * (quad - 2.0 * dot(w, s.k[i]) + s.constant[i]);
  }
  return q;
}

struct FmllrResult {
  FmllrTransform transform;
  std::vector<double> objective;  // Q at the start and after every row update
};

inline FmllrResult estimate_fmllr_from_stats(const FmllrStats& s, std::size_t iterations,
                                             const FmllrTransform* initial = nullptr) {
  const std::size_t dim = s.dim();
  require(dim >= 1, "estimate_fmllr: empty statistics");
  require(s.beta > static_cast<double>(dim), "estimate_fmllr: occupancy must exceed the feature dimension");
  FmllrResult r{initial ? *initial : FmllrTransform::identity(dim), {}};
  r.transform.validate();
  r.objective.push_back(fmllr_objective(s, r.transform));

  std::vector<Cholesky> chol;
  chol.reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    try {
      chol.emplace_back(s.g[i]);
    } catch (const NumericError&) {
      throw NumericError("estimate_fmllr: singular accumulator for row " + std::to_string(i));
    }
  }

  Vector w(dim + 1);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < dim; ++i) {
      const Matrix inv = inverse(r.transform.a);
      Vector p(dim + 1, 0.0);
      for (std::size_t j = 0; j < dim; ++j) p[j] = inv(j, i);
      const Vector gp = chol[i].solve(p), gk = chol[i].solve(s.k[i]);
      const double a = dot(p, gp), e = dot(p, gk);
      const double disc = std::sqrt(e * e + 4.0 * a * s.beta);
      double best = -std::numeric_limits<double>::infinity();
      Vector best_w;
      for (double alpha : {(-e + disc) / (2.0 * a), (-e - disc) / (2.0 * a)}) {
        for (std::size_t j = 0; j <= dim; ++j) w[j] = alpha * gp[j] + gk[j];
        // Row objective: beta log|p'w| - 1/2 w'G w + w'k  (other rows fixed).
        double gw = 0.0;
        for (std::size_t j = 0; j <= dim; ++j) gw += w[j] * (alpha * p[j] + s.k[i][j]);
        const double value = s.beta * std::log(std::abs(dot(p, w))) - 0.5 * gw + dot(w, s.k[i]);
        if (value > best) {
          best = value;
          best_w = w;
        }
      }
      for (std::size_t j = 0; j < dim; ++j) r.transform.a(i, j) = best_w[j];
      r.transform.b[i] = best_w[dim];
      r.objective.push_back(fmllr_objective(s, r.transform));
    }
  }
  if (std::abs(determinant(r.transform.a)) <= kMinAbsDeterminant)
    throw NumericError("estimate_fmllr: estimated A is singular");
  return r;
}

inline FmllrResult estimate_fmllr(const GmmModel& gmm, const Matrix& frames, const Matrix& posteriors,
                                  std::size_t iterations, const FmllrTransform* initial = nullptr) {
  return estimate_fmllr_from_stats(accumulate_fmllr_stats(gmm, frames, posteriors), iterations, initial);
}

struct AdaptOptions {
  std::size_t iterations = 5;  // row sweeps per pass
  std::size_t passes = 2;      // posterior passes; later passes use the adapted features
};

/// Posteriors from `align_gmm` on the raw frames, then repeated estimation
/// against `gmm` with posteriors recomputed on the adapted frames.
inline FmllrTransform adapt_unsupervised(const GmmModel& align_gmm, const GmmModel& gmm, const Matrix& frames,
                                         const AdaptOptions& opt = {}) {
  require(opt.passes >= 1, "adapt: need at least one pass");
  FmllrTransform t = FmllrTransform::identity(gmm.dim());
  Matrix post = gmm_posteriors(align_gmm, frames);
  for (std::size_t pass = 0; pass < opt.passes; ++pass) {
    if (pass > 0) post = gmm_posteriors(gmm, apply_fmllr(t, frames));
    t = estimate_fmllr(gmm, frames, post, opt.iterations, &t).transform;
  }
  return t;
}

/// Per-group transforms (speakers or utterances); `groups` index `frames`.
struct AdaptedSet {
  std::vector<Matrix> frames;
  std::vector<FmllrTransform> transforms;  // one per group
};

inline AdaptedSet two_pass_adapt(const GmmModel& align_gmm, const GmmModel& gmm, const std::vector<Matrix>& frames,
                                 const std::vector<std::vector<std::size_t>>& groups, const AdaptOptions& opt = {}) {
  AdaptedSet out{std::vector<Matrix>(frames.size()), {}};
  for (const auto& group : groups) {
    std::vector<Matrix> parts;
    for (std::size_t u : group) parts.push_back(frames.at(u));
    const FmllrTransform t = adapt_unsupervised(align_gmm, gmm, vstack(parts), opt);
    for (std::size_t u : group) out.frames[u] = apply_fmllr(t, frames[u]);
    out.transforms.push_back(t);
  }
  return out;
}

struct SatResult {
  GmmModel gmm;                            // canonical model
  std::vector<FmllrTransform> transforms;  // one per group, final alternation
};

/// Alternates per-group transform estimation and one GMM M-step on the
/// transformed data, starting from `gmm`.
inline SatResult sat_train(const GmmModel& gmm, const std::vector<Matrix>& frames,
                           const std::vector<std::vector<std::size_t>>& groups, std::size_t alternations,
                           std::size_t iterations = 5) {
  SatResult r{gmm, std::vector<FmllrTransform>(groups.size(), FmllrTransform::identity(gmm.dim()))};
  std::vector<Matrix> stacked;
  for (const auto& group : groups) {
    std::vector<Matrix> parts;
    for (std::size_t u : group) parts.push_back(frames.at(u));
    stacked.push_back(vstack(parts));
  }
  const Vector floor = variance_floor(vstack(stacked));
  for (std::size_t alt = 0; alt < alternations; ++alt) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const Matrix post = gmm_posteriors(r.gmm, apply_fmllr(r.transforms[g], stacked[g]));
      r.transforms[g] = estimate_fmllr(r.gmm, stacked[g], post, iterations, &r.transforms[g]).transform;
    }
    std::vector<Matrix> adapted;
    for (std::size_t g = 0; g < groups.size(); ++g) adapted.push_back(apply_fmllr(r.transforms[g], stacked[g]));
    const Matrix all = vstack(adapted);
    r.gmm = gmm_mstep(r.gmm, all, gmm_posteriors(r.gmm, all), floor);
  }
  return r;
}

using TransformTable = std::vector<std::pair<std::string, FmllrTransform>>;

inline void write_fmllr(std::ostream& os, const FmllrTransform& t) {
  write_magic(os, kFmllrMagic);
  write_u32(os, static_cast<std::uint32_t>(t.dim()));
  write_matrix(os, t.a);
  write_matrix(os, Matrix::row_vector(t.b));
}

inline FmllrTransform read_fmllr(std::istream& is) {
  expect_magic(is, kFmllrMagic);
  const std::uint32_t dim = read_u32(is);
  Matrix a = read_matrix(is);
  const Matrix b = read_matrix(is);
  if (a.rows() != dim || a.cols() != dim || b.rows() != 1 || b.cols() != dim)
    throw IoError("read_fmllr: shapes do not match header dimension");
  return {std::move(a), Vector(b.values().begin(), b.values().end())};
}

inline void write_transforms(std::ostream& os, const TransformTable& table) {
  for (const auto& [key, t] : table) {
    write_fmllr(os, t);
    write_u32(os, static_cast<std::uint32_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
  }
}

inline TransformTable read_transforms(std::istream& is) {
  TransformTable table;
  while (is.peek() != std::char_traits<char>::eof()) {
    FmllrTransform t = read_fmllr(is);
    std::string key(read_u32(is), '\0');
    if (!is.read(key.data(), static_cast<std::streamsize>(key.size()))) throw IoError("read_transforms: truncated key");
    table.emplace_back(std::move(key), std::move(t));
  }
  return table;
}

inline void save_transforms(const std::filesystem::path& path, const TransformTable& table) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_transforms(os, table);
}

inline TransformTable load_transforms(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_transforms(is);
}

}  // namespace ram

#endif  // RAM_FMLLR_HPP_
