// ram/ivector.hpp

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

// Total-variability i-vectors over a diagonal UBM.
//
// Statistics, with gamma_t(c) the UBM posteriors:
//   n_c = sum_t gamma_t(c),   f_c = sum_t gamma_t(c) (x_t - mu_c)
//
// Model: the supervector offset of a speaker is T w with w ~ N(0, I); block
// c of T is D x K and Sigma_c is the UBM variance of component c (kept fixed).
//   L = I + sum_c n_c T_c' Sigma_c^-1 T_c
//   w = L^-1 sum_c T_c' Sigma_c^-1 f_c
//
// EM over a list of per-speaker statistics:
//   E-step:  L_s, w_s, E[w w'] = L_s^-1 + w_s w_s'
//   M-step:  T_c = (sum_s f_sc w_s') (sum_s n_sc E_s[w w'])^-1
// The objective sum_s (0.5 b_s' L_s^-1 b_s - 0.5 log det L_s), b_s = T' Sigma^-1 f_s,
// is the log marginal likelihood of the statistics up to a T-independent
// constant, so EM never decreases it.
//
// Online extraction accumulates statistics frame by frame. After every chunk
// of `chunk` frames the running statistics are saturated and an i-vector is
// extracted. Frames of chunk k are paired with the i-vector estimated from
// the frames before the chunk (zero for the first one).
//
// tv.bin: "RAM-IVEC", u32 K, the UBM in gmm.hpp layout, then T (C*D x K) as a
// Matrix.

#ifndef RAM_IVECTOR_HPP_
#define RAM_IVECTOR_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/gmm.hpp"
#include "ram/linalg.hpp"
#include "ram/matrix.hpp"
#include "ram/matrix_io.hpp"
#include "ram/rng.hpp"

namespace ram {

inline constexpr std::string_view kExtractorMagic = "RAM-IVEC";
inline constexpr double kDefaultMaxCount = 600.0;
inline constexpr std::size_t kDefaultChunk = 10;
inline constexpr std::size_t kDeskUbmComponents = 64;
inline constexpr std::size_t kDeskIvectorDim = 10;

struct BwStats {
  Vector n;  // C
  Matrix f;  // C x D, centered on the UBM means

  BwStats() = default;
  BwStats(std::size_t components, std::size_t dim) : n(components, 0.0), f(components, dim) {}

  std::size_t num_components() const { return n.size(); }
  std::size_t dim() const { return f.cols(); }

  double total() const {
    double s = 0.0;
    for (double v : n) s += v;
    return s;
  }

  bool is_zero() const {
    for (double v : n)
      if (v != 0.0) return false;
    for (double v : f.values())
      if (v != 0.0) return false;
    return true;
  }

  BwStats& operator+=(const BwStats& o) {
    require(o.n.size() == n.size() && o.f.same_shape(f), "BwStats: shape mismatch");
    for (std::size_t c = 0; c < n.size(); ++c) n[c] += o.n[c];
    f += o.f;
    return *this;
  }
};

/// Adds one frame with precomputed UBM posteriors.
inline void add_frame(BwStats& s, const GmmModel& ubm, std::span<const double> x, std::span<const double> post) {
  for (std::size_t c = 0; c < s.num_components(); ++c) {
    const double g = post[c];
    if (g == 0.0) continue;
    s.n[c] += g;
    for (std::size_t d = 0; d < s.dim(); ++d) s.f(c, d) += g * (x[d] - ubm.means(c, d));
  }
}

inline BwStats accumulate_stats(const GmmModel& ubm, const Matrix& frames) {
  require(frames.cols() == ubm.dim(), "accumulate_stats: feature dim != UBM dim");
  BwStats s(ubm.num_components(), ubm.dim());
  const Vector k = gmm_log_constants(ubm);
  Vector post(ubm.num_components());
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    frame_posteriors(ubm, k, frames.row(t), post);
    add_frame(s, ubm, frames.row(t), post);
  }
  return s;
}

/// Statistics of `frames` under externally supplied posteriors (T x C), for
/// when posteriors come from a UBM over a different feature stream.
inline BwStats accumulate_stats(const GmmModel& ubm, const Matrix& frames, const Matrix& posteriors) {
  require(frames.cols() == ubm.dim(), "accumulate_stats: feature dim != UBM dim");
  require(posteriors.rows() == frames.rows() && posteriors.cols() == ubm.num_components(),
          "accumulate_stats: posteriors must be frames x components");
  BwStats s(ubm.num_components(), ubm.dim());
  for (std::size_t t = 0; t < frames.rows(); ++t) add_frame(s, ubm, frames.row(t), posteriors.row(t));
  return s;
}

inline BwStats saturate_stats(const BwStats& s, double max_count) {
  require(max_count > 0.0, "saturate_stats: max_count must be positive");
  const double total = s.total();
  if (total <= max_count) return s;
  BwStats out = s;
  const double scale = max_count / total;
  for (double& v : out.n) v *= scale;
  out.f *= scale;
  return out;
}

class IVectorExtractor {
 public:
  IVectorExtractor() = default;

  IVectorExtractor(GmmModel ubm, Matrix t) : ubm_(std::move(ubm)), t_(std::move(t)) {
    ubm_.validate();
    require(t_.rows() == ubm_.num_components() * ubm_.dim(), "IVectorExtractor: T must have C*D rows");
    require(t_.cols() >= 1 && t_.cols() <= t_.rows(), "IVectorExtractor: need 1 <= K <= C*D");
    precompute();
  }

  const GmmModel& ubm() const { return ubm_; }
  const Matrix& t() const { return t_; }
  std::size_t ivector_dim() const { return t_.cols(); }

  /// T_c' Sigma_c^-1 T_c.
  const Matrix& projected_precision(std::size_t c) const { return tst_[c]; }

  /// b = sum_c T_c' Sigma_c^-1 f_c.
  Vector linear_term(const BwStats& s) const {
    check(s);
    const std::size_t dim = ubm_.dim(), k = ivector_dim();
    Vector b(k, 0.0);
    for (std::size_t c = 0; c < ubm_.num_components(); ++c)
      for (std::size_t d = 0; d < dim; ++d) {
        const double g = s.f(c, d) / ubm_.variances(c, d);
        if (g == 0.0) continue;
        const double* row = t_.data() + (c * dim + d) * k;
        for (std::size_t j = 0; j < k; ++j) b[j] += row[j] * g;
      }
    return b;
  }

  /// L = I + sum_c n_c T_c' Sigma_c^-1 T_c.
  Matrix precision(const BwStats& s) const {
    check(s);
    Matrix l = Matrix::identity(ivector_dim());
    for (std::size_t c = 0; c < ubm_.num_components(); ++c)
      if (s.n[c] != 0.0) l.add_scaled(tst_[c], s.n[c]);
    return l;
  }

 private:
  void check(const BwStats& s) const {
    require(s.num_components() == ubm_.num_components() && s.dim() == ubm_.dim(),
            "IVectorExtractor: statistics do not match the UBM");
  }

  void precompute() {
    const std::size_t dim = ubm_.dim(), k = ivector_dim();
    tst_.assign(ubm_.num_components(), Matrix(k, k));
    for (std::size_t c = 0; c < ubm_.num_components(); ++c)
      for (std::size_t d = 0; d < dim; ++d) {
        const double inv = 1.0 / ubm_.variances(c, d);
        const double* row = t_.data() + (c * dim + d) * k;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) tst_[c](i, j) += row[i] * inv * row[j];
      }
  }

  GmmModel ubm_;
  Matrix t_;
  std::vector<Matrix> tst_;
};

struct IVectorPosterior {
  Vector mean;
  Matrix covariance;
  double log_det_precision = 0.0;
  double quadratic = 0.0;  // b' L^-1 b
};

inline IVectorPosterior ivector_posterior(const IVectorExtractor& ext, const BwStats& s) {
  const Vector b = ext.linear_term(s);
  const Cholesky chol(ext.precision(s));
  IVectorPosterior p{chol.solve(b), chol.inverse(), chol.log_determinant(), 0.0};
  p.quadratic = dot(b, p.mean);
  return p;
}

inline Vector extract_ivector(const IVectorExtractor& ext, const BwStats& s) {
  const Vector b = ext.linear_term(s);
  bool zero = true;
  for (double v : b) zero = zero && v == 0.0;
  if (zero) return Vector(ext.ivector_dim(), 0.0);
  return Cholesky(ext.precision(s)).solve(b);
}

struct ExtractorTrainResult {
  IVectorExtractor extractor;
  std::vector<double> objective;  // before the first and after every EM iteration
};

/// Auxiliary objective of the current extractor on a statistics list.
inline double extractor_objective(const IVectorExtractor& ext, std::span<const BwStats> stats) {
  double obj = 0.0;
  for (const BwStats& s : stats) {
    const IVectorPosterior p = ivector_posterior(ext, s);
    obj += 0.5 * p.quadratic - 0.5 * p.log_det_precision;
  }
  return obj;
}

inline ExtractorTrainResult train_extractor(const GmmModel& ubm, std::span<const BwStats> stats, std::size_t k,
                                            std::size_t iterations, Rng& rng) {
  require(!stats.empty(), "train_extractor: empty statistics list");
  require(k >= 1, "train_extractor: K must be >= 1");
  bool any = false;
  for (const BwStats& s : stats) any = any || !s.is_zero();
  require(any, "train_extractor: all statistics are zero");
  const std::size_t cc = ubm.num_components(), dim = ubm.dim();

  Matrix t(cc * dim, k);
  for (std::size_t c = 0; c < cc; ++c)
    for (std::size_t d = 0; d < dim; ++d)
      for (std::size_t j = 0; j < k; ++j) t(c * dim + d, j) = std::sqrt(ubm.variances(c, d)) * rng.normal();
  ExtractorTrainResult r{IVectorExtractor(ubm, t), {}};

  for (std::size_t it = 0;; ++it) {
    std::vector<Matrix> a(cc, Matrix(k, k));
    std::vector<Matrix> cross(cc, Matrix(dim, k));
    double obj = 0.0;
    for (const BwStats& s : stats) {
      const IVectorPosterior p = ivector_posterior(r.extractor, s);
      obj += 0.5 * p.quadratic - 0.5 * p.log_det_precision;
      if (it == iterations) continue;
      Matrix second = p.covariance;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) second(i, j) += p.mean[i] * p.mean[j];
      for (std::size_t c = 0; c < cc; ++c) {
        if (s.n[c] != 0.0) a[c].add_scaled(second, s.n[c]);
        for (std::size_t d = 0; d < dim; ++d)
          for (std::size_t j = 0; j < k; ++j) cross[c](d, j) += s.f(c, d) * p.mean[j];
      }
    }
    r.objective.push_back(obj);
    if (it == iterations) break;

    Matrix next = r.extractor.t();
    for (std::size_t c = 0; c < cc; ++c) {
      bool occupied = false;
      for (double v : a[c].values()) occupied = occupied || v != 0.0;
      if (!occupied) continue;  // no data for this component: keep its block
      const Cholesky chol(a[c]);
      // A_c is symmetric, so row d of T_c solves A_c x = cross_c(d, :)'.
      for (std::size_t d = 0; d < dim; ++d) next.set_row(c * dim + d, chol.solve(cross[c].row(d)));
    }
    r.extractor = IVectorExtractor(ubm, std::move(next));
  }
  return r;
}

struct OnlineIvectors {
  std::vector<Vector> chunks;  // after chunk 0, 1, ...
  Matrix per_frame;            // T x K, causal pairing
  Vector final;
  BwStats stats;  // running statistics at the end of the stream
};

/// `carry` continues a stream from earlier statistics (pseudo-speaker pairs).
/// `posteriors`, when given, replace the extractor UBM's own posteriors.
inline OnlineIvectors extract_online(const IVectorExtractor& ext, const Matrix& frames, std::size_t chunk,
                                     double max_count = kDefaultMaxCount, const BwStats* carry = nullptr,
                                     const Matrix* posteriors = nullptr) {
  require(chunk >= 1, "extract_online: chunk must be >= 1");
  require(frames.rows() > 0, "extract_online: empty utterance");
  const GmmModel& ubm = ext.ubm();
  require(frames.cols() == ubm.dim(), "extract_online: feature dim != UBM dim");
  require(!posteriors || (posteriors->rows() == frames.rows() && posteriors->cols() == ubm.num_components()),
          "extract_online: posteriors must be frames x components");
  OnlineIvectors out;
  out.stats = carry ? *carry : BwStats(ubm.num_components(), ubm.dim());
  out.per_frame = Matrix(frames.rows(), ext.ivector_dim());
  Vector current = extract_ivector(ext, saturate_stats(out.stats, max_count));
  const Vector k = gmm_log_constants(ubm);
  Vector post(ubm.num_components());
  for (std::size_t start = 0; start < frames.rows(); start += chunk) {
    const std::size_t end = std::min(frames.rows(), start + chunk);
    for (std::size_t t = start; t < end; ++t) {
      out.per_frame.set_row(t, current);
      if (posteriors) {
        add_frame(out.stats, ubm, frames.row(t), posteriors->row(t));
      } else {
        frame_posteriors(ubm, k, frames.row(t), post);
        add_frame(out.stats, ubm, frames.row(t), post);
      }
    }
    current = extract_ivector(ext, saturate_stats(out.stats, max_count));
    out.chunks.push_back(current);
  }
  out.final = current;
  return out;
}

/// Groups consecutive pairs of utterances within each speaker, keeping
/// manifest order; an odd utterance out forms its own group.
inline std::vector<std::vector<std::size_t>> make_pseudo_speakers(const std::vector<std::string>& speakers) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> open;  // speaker -> group awaiting a partner
  for (std::size_t u = 0; u < speakers.size(); ++u) {
    auto it = open.find(speakers[u]);
    if (it != open.end()) {
      groups[it->second].push_back(u);
      open.erase(it);
    } else {
      open[speakers[u]] = groups.size();
      groups.push_back({u});
    }
  }
  return groups;
}

/// Groups utterances by speaker in order of first appearance.
inline std::vector<std::vector<std::size_t>> group_by_speaker(const std::vector<std::string>& speakers) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t u = 0; u < speakers.size(); ++u) {
    auto [it, inserted] = index.try_emplace(speakers[u], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(u);
  }
  return groups;
}

inline void write_extractor(std::ostream& os, const IVectorExtractor& ext) {
  write_magic(os, kExtractorMagic);
  write_u32(os, static_cast<std::uint32_t>(ext.ivector_dim()));
  write_gmm(os, ext.ubm());
  write_matrix(os, ext.t());
}

inline IVectorExtractor read_extractor(std::istream& is) {
  expect_magic(is, kExtractorMagic);
  const std::uint32_t k = read_u32(is);
  GmmModel ubm = read_gmm(is);
  Matrix t = read_matrix(is);
  if (t.cols() != k || t.rows() != ubm.num_components() * ubm.dim())
    throw IoError("read_extractor: T shape does not match header");
  return IVectorExtractor(std::move(ubm), std::move(t));
}

inline void save_extractor(const std::filesystem::path& path, const IVectorExtractor& ext) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_extractor(os, ext);
}

inline IVectorExtractor load_extractor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_extractor(is);
}

/// ivecs.tsv rows: key then K tab-separated reals.
using IvectorTable = std::vector<std::pair<std::string, Vector>>;

inline void write_ivectors(std::ostream& os, const IvectorTable& rows) {
  os.precision(17);
  for (const auto& [key, v] : rows) {
    os << key;
    for (double x : v) os << '\t' << x;
    os << '\n';
  }
}

inline IvectorTable read_ivectors(std::istream& is) {
  IvectorTable rows;
  std::string line;
  int line_no = 0;
  std::size_t k = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    Vector v;
    double x = 0.0;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) throw IoError("ivectors line " + std::to_string(line_no) + ": bad number");
    if (v.empty() || (k && v.size() != k))
      throw IoError("ivectors line " + std::to_string(line_no) + ": inconsistent dimension");
    k = v.size();
    rows.emplace_back(std::move(key), std::move(v));
  }
  return rows;
}

}  // namespace ram

#endif  // RAM_IVECTOR_HPP_
