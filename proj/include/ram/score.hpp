// ram/score.hpp

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

// Phone error rate by unit-cost Levenshtein alignment.
//
//   PER = 100 * (S + D + I) / N,  summed over the corpus before dividing.
//
// When several alignments have the minimal cost the backtrace prefers
// substitution/match, then deletion, then insertion, so the S/D/I split is
// deterministic. Transcript files (ref.tsv, hyp.tsv) hold
// "utterance<TAB>phone phone ..." per line.

#ifndef RAM_SCORE_HPP_
#define RAM_SCORE_HPP_

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/phones.hpp"

namespace ram {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }

  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_length += o.reference_length;
    return *this;
  }
};

inline EditCounts align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});

  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t sub = ref[i - 1] == hyp[j - 1] ? 0u : 1u;
      if (at(i, j) == at(i - 1, j - 1) + sub) {
        c.substitutions += sub;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

using Transcripts = std::map<std::string, std::vector<std::string>>;

struct PerReport {
  EditCounts total;
  std::map<std::string, EditCounts> per_utterance;

  double per() const {
    if (total.reference_length == 0) return total.errors() == 0 ? 0.0 : 100.0;
    return 100.0 * static_cast<double>(total.errors()) / static_cast<double>(total.reference_length);
  }
};

/// Both corpora must cover exactly the same utterance ids.
inline PerReport compute_per(const Transcripts& refs, const Transcripts& hyps) {
  require(refs.size() == hyps.size(), "compute_per: reference and hypothesis utterance sets differ");
  PerReport report;
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    require(it != hyps.end(), "compute_per: no hypothesis for utterance " + id);
    const EditCounts c = align(ref, it->second);
    report.per_utterance[id] = c;
    report.total += c;
  }
  return report;
}

/// Applies a scoring map to every transcript.
inline Transcripts map_transcripts(const Transcripts& in, const PhoneMap& map, bool collapse = true) {
  Transcripts out;
  for (const auto& [id, seq] : in) out[id] = map_phones(seq, map, collapse);
  return out;
}

inline std::vector<std::string> split_phones(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string s;
  while (is >> s) out.push_back(s);
  return out;
}

inline std::string join_phones(const std::vector<std::string>& seq) {
  std::string out;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    if (k) out += ' ';
    out += seq[k];
  }
  return out;
}

inline Transcripts read_transcripts(std::istream& is) {
  Transcripts out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string id = line.substr(0, tab);
    if (id.empty()) throw IoError("transcripts line " + std::to_string(line_no) + ": missing utterance id");
    if (out.count(id)) throw IoError("transcripts: duplicate utterance " + id);
    out[id] = tab == std::string::npos ? std::vector<std::string>{} : split_phones(line.substr(tab + 1));
  }
  return out;
}

inline void write_transcripts(std::ostream& os, const Transcripts& t) {
  for (const auto& [id, seq] : t) os << id << '\t' << join_phones(seq) << '\n';
}

inline void write_alignment_csv(std::ostream& os, const PerReport& r) {
  os << "utterance,ref_len,substitutions,deletions,insertions\n";
  for (const auto& [id, c] : r.per_utterance)
    os << id << ',' << c.reference_length << ',' << c.substitutions << ',' << c.deletions << ',' << c.insertions
       << '\n';
}

}  // namespace ram

#endif  // RAM_SCORE_HPP_
