// ram/gmm.hpp

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

// Diagonal-covariance Gaussian mixture and its EM training.
//
// Initialization: best of kKmeansRestarts k-means++ seedings from the Rng,
// each followed by 10 Lloyd iterations, then one moment estimate per
// cluster. EM follows with variances floored at 1e-4 times the global
// variance of the data. A component that loses all occupancy keeps its mean
// and variance with weight 0.
//
// gmm file: "RAM-GMM" then Matrix weights (1 x C), means (C x D),
// variances (C x D), all in the RAM1 format.

#ifndef RAM_GMM_HPP_
#define RAM_GMM_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "ram/error.hpp"
#include "ram/matrix.hpp"
#include "ram/matrix_io.hpp"
#include "ram/rng.hpp"

namespace ram {

inline constexpr std::string_view kGmmMagic = "RAM-GMM";
inline constexpr double kVarianceFloorFraction = 1e-4;

struct GmmModel {
  Vector weights;    // C, sum to 1
  Matrix means;      // C x D
  Matrix variances;  // C x D

  std::size_t num_components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }

  void validate() const {
    const std::size_t c = weights.size();
    require(c >= 1, "GmmModel: no components");
    require(means.rows() == c && variances.rows() == c && variances.cols() == means.cols(),
            "GmmModel: parameter shapes disagree");
    double s = 0.0;
    for (double w : weights) {
      require(w >= 0.0, "GmmModel: negative weight");
      s += w;
    }
    require(std::abs(s - 1.0) < 1e-10, "GmmModel: weights do not sum to 1");
    for (double v : variances.values()) require(v > 0.0, "GmmModel: non-positive variance");
  }
};

/// Per-component log normalizers: log w_c - 0.5 sum_d log(2 pi var_cd).
inline Vector gmm_log_constants(const GmmModel& g) {
  Vector out(g.num_components());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < out.size(); ++c) {
    double s = 0.0;
    for (std::size_t d = 0; d < g.dim(); ++d) s += log2pi + std::log(g.variances(c, d));
    out[c] = (g.weights[c] > 0.0 ? std::log(g.weights[c]) : -std::numeric_limits<double>::infinity()) - 0.5 * s;
  }
  return out;
}

/// Fills `post` with component posteriors of one frame; returns log p(x).
inline double frame_posteriors(const GmmModel& g, std::span<const double> constants, std::span<const double> x,
                               std::span<double> post) {
  const std::size_t cc = g.num_components(), dim = g.dim();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cc; ++c) {
    double q = 0.0;
    const double* mu = g.means.data() + c * dim;
    const double* var = g.variances.data() + c * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - mu[d];
      q += diff * diff / var[d];
    }
    post[c] = constants[c] - 0.5 * q;
    best = std::max(best, post[c]);
  }
  double z = 0.0;
  for (std::size_t c = 0; c < cc; ++c) z += (post[c] = std::exp(post[c] - best));
  for (std::size_t c = 0; c < cc; ++c) post[c] /= z;
  return best + std::log(z);
}

/// T x C component posteriors.
inline Matrix gmm_posteriors(const GmmModel& g, const Matrix& frames, double* total_loglik = nullptr) {
  require(frames.cols() == g.dim(), "gmm_posteriors: dimension mismatch");
  const Vector k = gmm_log_constants(g);
  Matrix post(frames.rows(), g.num_components());
  double ll = 0.0;
  for (std::size_t t = 0; t < frames.rows(); ++t) ll += frame_posteriors(g, k, frames.row(t), post.row(t));
  if (total_loglik) *total_loglik = ll;
  return post;
}

inline double gmm_log_likelihood(const GmmModel& g, const Matrix& frames) {
  double ll = 0.0;
  gmm_posteriors(g, frames, &ll);
  return ll;
}

/// Posterior-weighted maximum-likelihood update with floored variances.
inline GmmModel gmm_mstep(const GmmModel& g, const Matrix& frames, const Matrix& post, std::span<const double> floor) {
  const std::size_t cc = g.num_components(), dim = g.dim();
  Vector occ(cc, 0.0);
  Matrix sum(cc, dim), sq(cc, dim);
  for (std::size_t t = 0; t < frames.rows(); ++t)
    for (std::size_t c = 0; c < cc; ++c) {
      const double p = post(t, c);
      if (p == 0.0) continue;
      occ[c] += p;
      for (std::size_t d = 0; d < dim; ++d) {
        const double x = frames(t, d);
        sum(c, d) += p * x;
        sq(c, d) += p * x * x;
      }
    }
  GmmModel out = g;
  double total = 0.0;
  for (double o : occ) total += o;
  for (std::size_t c = 0; c < cc; ++c) {
    out.weights[c] = occ[c] / total;
    if (occ[c] <= 0.0) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      const double mean = sum(c, d) / occ[c];
      out.means(c, d) = mean;
      out.variances(c, d) = std::max(sq(c, d) / occ[c] - mean * mean, floor[d]);
    }
  }
  return out;
}

struct UbmTrainResult {
  GmmModel model;
  std::vector<double> log_likelihood;  // total log-likelihood after 0..iterations EM steps
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

inline constexpr int kKmeansRestarts = 4;

/// One k-means++ seeding plus 10 Lloyd iterations; returns the distortion.
inline double kmeans_once(const Matrix& x, std::size_t k, Rng& rng, Matrix& centers, std::vector<std::size_t>& assign) {
  const std::size_t n = x.rows();
  centers = Matrix(k, x.cols());
  centers.set_row(0, x.row(rng.uniform_index(n)));
  Vector nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(x.row(i), centers.row(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = rng.uniform_index(n);
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.set_row(c, x.row(pick));
  }
  assign.assign(n, 0);
  for (int iter = 0; iter < 10; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(x.row(i), centers.row(c));
        if (d < best) {
          best = d;
          assign[i] = c;
        }
      }
    }
    Matrix sum(k, x.cols());
    Vector count(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      count[assign[i]] += 1.0;
      for (std::size_t d = 0; d < x.cols(); ++d) sum(assign[i], d) += x(i, d);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (count[c] > 0.0)
        for (std::size_t d = 0; d < x.cols(); ++d) centers(c, d) = sum(c, d) / count[c];
  }
  double distortion = 0.0;
  for (std::size_t i = 0; i < n; ++i) distortion += squared_distance(x.row(i), centers.row(assign[i]));
  return distortion;
}

/// Best of kKmeansRestarts seedings by distortion; returns the hard assignment.
inline std::vector<std::size_t> kmeans(const Matrix& x, std::size_t k, Rng& rng, Matrix& centers) {
  std::vector<std::size_t> best_assign, assign;
  Matrix trial;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < kKmeansRestarts; ++r) {
    const double distortion = kmeans_once(x, k, rng, trial, assign);
    if (distortion < best) {
      best = distortion;
      best_assign = assign;
      centers = trial;
    }
  }
  return best_assign;
}

}  // namespace detail

/// Global per-dimension variance times the floor fraction.
inline Vector variance_floor(const Matrix& frames) {
  const Vector mean = column_mean(frames);
  Vector var(frames.cols(), 0.0);
  for (std::size_t t = 0; t < frames.rows(); ++t)
    for (std::size_t d = 0; d < frames.cols(); ++d) var[d] += (frames(t, d) - mean[d]) * (frames(t, d) - mean[d]);
  for (double& v : var) v = std::max(kVarianceFloorFraction * v / static_cast<double>(frames.rows()), 1e-300);
  return var;
}

inline UbmTrainResult train_ubm(const Matrix& frames, std::size_t components, std::size_t iterations, Rng& rng) {
  require(frames.rows() > 0, "train_ubm: no data");
  require(components >= 1, "train_ubm: need at least one component");
  require(components <= frames.rows(), "train_ubm: more components than frames");
  const std::size_t dim = frames.cols();
  const Vector floor = variance_floor(frames);

  Matrix centers;
  const std::vector<std::size_t> assign = detail::kmeans(frames, components, rng, centers);
  Matrix hard(frames.rows(), components);
  for (std::size_t t = 0; t < frames.rows(); ++t) hard(t, assign[t]) = 1.0;
  GmmModel init{Vector(components, 1.0 / static_cast<double>(components)), centers, Matrix(components, dim)};
  for (std::size_t c = 0; c < components; ++c)
    for (std::size_t d = 0; d < dim; ++d) init.variances(c, d) = floor[d] / kVarianceFloorFraction;
  UbmTrainResult r{gmm_mstep(init, frames, hard, floor), {}};

  double ll = 0.0;
  Matrix post = gmm_posteriors(r.model, frames, &ll);
  r.log_likelihood.push_back(ll);
  for (std::size_t it = 0; it < iterations; ++it) {
    r.model = gmm_mstep(r.model, frames, post, floor);
    post = gmm_posteriors(r.model, frames, &ll);
    r.log_likelihood.push_back(ll);
  }
  return r;
}

/// Draws n frames; also returns the generating component of each.
inline Matrix sample_gmm(const GmmModel& g, std::size_t n, Rng& rng, std::vector<std::size_t>* components = nullptr) {
  Matrix out(n, g.dim());
  if (components) components->assign(n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    double u = rng.uniform();
    std::size_t c = 0;
    while (c + 1 < g.num_components() && u >= g.weights[c]) u -= g.weights[c++];
    for (std::size_t d = 0; d < g.dim(); ++d) out(t, d) = rng.normal(g.means(c, d), std::sqrt(g.variances(c, d)));
    if (components) (*components)[t] = c;
  }
  return out;
}

inline void write_gmm(std::ostream& os, const GmmModel& g) {
  write_magic(os, kGmmMagic);
  write_matrix(os, Matrix::row_vector(g.weights));
  write_matrix(os, g.means);
  write_matrix(os, g.variances);
}

inline GmmModel read_gmm(std::istream& is) {
  expect_magic(is, kGmmMagic);
  const Matrix w = read_matrix(is);
  GmmModel g{Vector(w.values().begin(), w.values().end()), read_matrix(is), read_matrix(is)};
  try {
    g.validate();
  } catch (const ContractError& e) {
    throw IoError(std::string("read_gmm: ") + e.what());
  }
  return g;
}

inline void save_gmm(const std::filesystem::path& path, const GmmModel& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_gmm(os, g);
}

inline GmmModel load_gmm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_gmm(is);
}

}  // namespace ram

#endif  // RAM_GMM_HPP_
