// ram/features.hpp

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

// Utterances, cepstral mean (and optional variance) normalization, and
// i-vector concatenation.
//
// Online CMN is strictly causal. With m_0 = global mean and P prior frames,
//   m_t = (P m_0 + sum_{i<=t} x_i) / (P + t)          (no forgetting)
//   m_t = (1 - alpha) m_{t-1} + alpha x_t             (forgetting alpha)
// and output frame t is x_t - m_{t-1}.

#ifndef RAM_FEATURES_HPP_
#define RAM_FEATURES_HPP_

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ram/error.hpp"
#include "ram/matrix.hpp"

namespace ram {

struct Utterance {
  std::string id;
  std::string speaker;
  Matrix frames;                        // T x dim
  std::vector<int> labels;              // per-frame state ids, empty if absent
  std::vector<std::string> transcript;  // phone symbols, empty if absent
  Matrix ubm_frames;                    // optional separate UBM features, empty if absent

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
  bool has_labels() const { return !labels.empty(); }
};

/// Throws unless every utterance has dim `dim` and labels (when present) of length T.
inline void validate_corpus(std::span<const Utterance> utts) {
  if (utts.empty()) return;
  const std::size_t dim = utts.front().dim();
  for (const Utterance& u : utts) {
    require(u.dim() == dim, "corpus: feature dimension differs in utterance " + u.id);
    require(u.labels.empty() || u.labels.size() == u.num_frames(), "corpus: label count != frame count in " + u.id);
  }
}

enum class CmnMode { kNone, kOfflineUtterance, kOfflineSpeaker, kOnline };

inline std::string_view to_string(CmnMode mode) {
  switch (mode) {
    case CmnMode::kNone: return "none";
    case CmnMode::kOfflineUtterance: return "utterance";
    case CmnMode::kOfflineSpeaker: return "speaker";
    case CmnMode::kOnline: return "online";
  }
  return "?";
}

struct CmnConfig {
  CmnMode mode = CmnMode::kOnline;
  Vector global_mean;
  Vector global_variance;  // needed only when variance normalization is on
  std::size_t prior_frames = 100;
  std::optional<double> forgetting;  // alpha in (0, 1]; disabled by default
  bool normalize_variance = false;
};

namespace detail {

inline constexpr double kVarianceFloor = 1e-10;

inline void center_rows(Matrix& frames, std::span<const double> mean, std::span<const double> inv_std) {
  for (std::size_t t = 0; t < frames.rows(); ++t)
    for (std::size_t d = 0; d < frames.cols(); ++d) {
      double v = frames(t, d) - mean[d];
      if (!inv_std.empty()) v *= inv_std[d];
      frames(t, d) = v;
    }
}

}  // namespace detail

/// Global mean and (population) variance over all frames of a corpus.
inline std::pair<Vector, Vector> corpus_moments(std::span<const Utterance> utts) {
  require(!utts.empty(), "corpus_moments: empty corpus");
  const std::size_t dim = utts.front().dim();
  Vector sum(dim, 0.0), sq(dim, 0.0);
  double n = 0.0;
  for (const Utterance& u : utts) {
    require(u.dim() == dim, "corpus_moments: dimension mismatch");
    for (std::size_t t = 0; t < u.num_frames(); ++t)
      for (std::size_t d = 0; d < dim; ++d) {
        sum[d] += u.frames(t, d);
        sq[d] += u.frames(t, d) * u.frames(t, d);
      }
    n += static_cast<double>(u.num_frames());
  }
  require(n > 0.0, "corpus_moments: no frames");
  for (std::size_t d = 0; d < dim; ++d) {
    sum[d] /= n;
    sq[d] = std::max(sq[d] / n - sum[d] * sum[d], 0.0);
  }
  return {sum, sq};
}

/// Subtracts the mean of each scope group (utterance or speaker) from its
/// frames; optionally divides by the group's standard deviation.
inline std::vector<Utterance> cmn_offline(std::vector<Utterance> utts, CmnMode scope,
                                          bool normalize_variance = false) {
  require(scope == CmnMode::kOfflineUtterance || scope == CmnMode::kOfflineSpeaker,
          "cmn_offline: scope must be utterance or speaker");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < utts.size(); ++i)
    groups[scope == CmnMode::kOfflineSpeaker ? utts[i].speaker : utts[i].id + "\x1f" + std::to_string(i)]
        .push_back(i);
  for (const auto& [key, members] : groups) {
    const std::size_t dim = utts[members.front()].dim();
    Vector sum(dim, 0.0), sq(dim, 0.0);
    double n = 0.0;
    for (std::size_t i : members) {
      const Matrix& f = utts[i].frames;
      require(f.cols() == dim, "cmn_offline: dimension mismatch in group");
      for (std::size_t t = 0; t < f.rows(); ++t)
        for (std::size_t d = 0; d < dim; ++d) {
          sum[d] += f(t, d);
          sq[d] += f(t, d) * f(t, d);
        }
      n += static_cast<double>(f.rows());
    }
    require(n > 0.0, "cmn_offline: empty group");
    Vector inv_std;
    for (double& v : sum) v /= n;
    if (normalize_variance) {
      inv_std.resize(dim);
      for (std::size_t d = 0; d < dim; ++d)
        inv_std[d] = 1.0 / std::sqrt(std::max(sq[d] / n - sum[d] * sum[d], detail::kVarianceFloor));
    }
    for (std::size_t i : members) detail::center_rows(utts[i].frames, sum, inv_std);
  }
  return utts;
}

/// Causal running normalization of one utterance's frames.
inline Matrix cmn_online(const Matrix& frames, const CmnConfig& config) {
  require(config.mode == CmnMode::kOnline, "cmn_online: config mode must be online");
  require(config.global_mean.size() == frames.cols(), "cmn_online: global mean missing or wrong dimension");
  require(config.prior_frames >= 1, "cmn_online: prior_frames must be >= 1");
  if (config.forgetting)
    require(*config.forgetting > 0.0 && *config.forgetting <= 1.0, "cmn_online: forgetting must be in (0, 1]");
  if (config.normalize_variance)
    require(config.global_variance.size() == frames.cols(), "cmn_online: global variance missing");

  const std::size_t dim = frames.cols();
  const double prior = static_cast<double>(config.prior_frames);
  Vector mean = config.global_mean;
  Vector second(dim, 0.0);  // running E[x^2]
  if (config.normalize_variance)
    for (std::size_t d = 0; d < dim; ++d) second[d] = config.global_variance[d] + mean[d] * mean[d];
  Vector sum(dim), sum_sq(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    sum[d] = prior * mean[d];
    sum_sq[d] = prior * second[d];
  }

  Matrix out(frames.rows(), dim);
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    for (std::size_t d = 0; d < dim; ++d) {
      double v = frames(t, d) - mean[d];
      if (config.normalize_variance)
        v /= std::sqrt(std::max(second[d] - mean[d] * mean[d], detail::kVarianceFloor));
      out(t, d) = v;
    }
    for (std::size_t d = 0; d < dim; ++d) {
      const double x = frames(t, d);
      if (config.forgetting) {
        const double a = *config.forgetting;
        mean[d] = (1.0 - a) * mean[d] + a * x;
        second[d] = (1.0 - a) * second[d] + a * x * x;
      } else {
        const double n = prior + static_cast<double>(t + 1);
        sum[d] += x;
        sum_sq[d] += x * x;
        mean[d] = sum[d] / n;
        second[d] = sum_sq[d] / n;
      }
    }
  }
  return out;
}

/// Applies `mode` to a whole corpus. Online mode needs config.global_mean.
inline std::vector<Utterance> normalize_corpus(std::vector<Utterance> utts, const CmnConfig& config) {
  switch (config.mode) {
    case CmnMode::kNone: return utts;
    case CmnMode::kOfflineUtterance:
    case CmnMode::kOfflineSpeaker: return cmn_offline(std::move(utts), config.mode, config.normalize_variance);
    case CmnMode::kOnline:
      for (Utterance& u : utts) u.frames = cmn_online(u.frames, config);
      return utts;
  }
  return utts;
}

/// Concatenates the same i-vector to the right of every frame.
inline Matrix append_ivector(const Matrix& frames, std::span<const double> ivector) {
  Matrix out(frames.rows(), frames.cols() + ivector.size());
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    std::copy(frames.row(t).begin(), frames.row(t).end(), out.row(t).begin());
    std::copy(ivector.begin(), ivector.end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(frames.cols()));
  }
  return out;
}

/// Per-frame i-vectors (T x K), for online extraction where the vector changes
/// as the utterance streams in.
inline Matrix append_ivector_rows(const Matrix& frames, const Matrix& ivectors) {
  require(ivectors.rows() == frames.rows(), "append_ivector_rows: row count mismatch");
  Matrix out(frames.rows(), frames.cols() + ivectors.cols());
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    std::copy(frames.row(t).begin(), frames.row(t).end(), out.row(t).begin());
    std::copy(ivectors.row(t).begin(), ivectors.row(t).end(),
              out.row(t).begin() + static_cast<std::ptrdiff_t>(frames.cols()));
  }
  return out;
}

/// Appends one i-vector per utterance; every i-vector must have the same length.
inline std::vector<Utterance> append_ivectors(std::vector<Utterance> utts, std::span<const Vector> ivectors) {
  require(utts.size() == ivectors.size(), "append_ivectors: one i-vector per utterance required");
  for (std::size_t i = 0; i < utts.size(); ++i) {
    require(ivectors[i].size() == ivectors.front().size(), "append_ivectors: i-vector dimension differs");
    utts[i].frames = append_ivector(utts[i].frames, ivectors[i]);
  }
  return utts;
}

}  // namespace ram

#endif  // RAM_FEATURES_HPP_
