// ram/corpus.hpp

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

// Corpus directories.
//
//   <dir>/corpus.tsv   header line, then one row per utterance:
//                      utterance  speaker  features  labels  transcript  [ubm_features]
//   <dir>/phones.tsv   phone inventory (phones.hpp)
//
// features / ubm_features name Matrix files, labels a file of newline
// separated state ids; paths are relative to <dir>. The transcript column
// holds space separated phone symbols. "-" marks an absent field.

#ifndef RAM_CORPUS_HPP_
#define RAM_CORPUS_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/features.hpp"
#include "ram/matrix_io.hpp"
#include "ram/phones.hpp"
#include "ram/score.hpp"

namespace ram {

inline constexpr const char* kCorpusHeader = "utterance\tspeaker\tfeatures\tlabels\ttranscript\tubm_features";
inline constexpr const char* kAbsent = "-";

struct Corpus {
  PhoneInventory phones;
  std::vector<Utterance> utterances;

  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    for (const Utterance& u : utterances) out.push_back(u.speaker);
    return out;
  }

  std::vector<Matrix> frames() const {
    std::vector<Matrix> out;
    for (const Utterance& u : utterances) out.push_back(u.frames);
    return out;
  }

  Transcripts transcripts() const {
    Transcripts out;
    for (const Utterance& u : utterances) out[u.id] = u.transcript;
    return out;
  }
};

inline void write_labels(std::ostream& os, const std::vector<int>& labels) {
  for (int l : labels) os << l << '\n';
}

inline std::vector<int> read_labels(std::istream& is) {
  std::vector<int> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(line, &used);
    } catch (const std::exception&) {
      throw IoError("labels: bad integer '" + line + "'");
    }
    if (used != line.size()) throw IoError("labels: bad integer '" + line + "'");
    out.push_back(v);
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace detail

/// Writes features to feats/<id>.mat, labels to labels/<id>.lab.
inline void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "feats");
  fs::create_directories(dir / "labels");
  {
    std::ofstream os(dir / "phones.tsv");
    if (!os) throw IoError("cannot write " + (dir / "phones.tsv").string());
    write_phones(os, corpus.phones);
  }
  std::ofstream manifest(dir / "corpus.tsv");
  if (!manifest) throw IoError("cannot write " + (dir / "corpus.tsv").string());
  manifest << kCorpusHeader << '\n';
  for (const Utterance& u : corpus.utterances) {
    require(!u.id.empty() && u.id.find_first_of("\t /") == std::string::npos,
            "save_corpus: utterance ids must be non-empty without tabs, spaces or slashes");
    const std::string feats = "feats/" + u.id + ".mat";
    save_matrix(dir / feats, u.frames);
    std::string labels = kAbsent;
    if (u.has_labels()) {
      labels = "labels/" + u.id + ".lab";
      std::ofstream ls(dir / labels);
      write_labels(ls, u.labels);
    }
    std::string ubm = kAbsent;
    if (!u.ubm_frames.empty()) {
      ubm = "feats/" + u.id + ".ubm.mat";
      save_matrix(dir / ubm, u.ubm_frames);
    }
    manifest << u.id << '\t' << u.speaker << '\t' << feats << '\t' << labels << '\t'
             << (u.transcript.empty() ? std::string(kAbsent) : join_phones(u.transcript)) << '\t' << ubm << '\n';
  }
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  {
    std::ifstream is(dir / "phones.tsv");
    if (!is) throw IoError("cannot open " + (dir / "phones.tsv").string());
    corpus.phones = read_phones(is);
  }
  std::ifstream manifest(dir / "corpus.tsv");
  if (!manifest) throw IoError("cannot open " + (dir / "corpus.tsv").string());
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("utterance\t", 0) == 0) continue;
    const std::vector<std::string> cols = detail::split_tabs(line);
    if (cols.size() != 5 && cols.size() != 6)
      throw IoError("corpus.tsv line " + std::to_string(line_no) + ": expected 5 or 6 tab-separated columns");
    Utterance u;
    u.id = cols[0];
    u.speaker = cols[1];
    if (cols[2] == kAbsent) throw IoError("corpus.tsv line " + std::to_string(line_no) + ": features are required");
    u.frames = load_matrix(dir / cols[2]);
    if (cols[3] != kAbsent) {
      std::ifstream ls(dir / cols[3]);
      if (!ls) throw IoError("cannot open " + (dir / cols[3]).string());
      u.labels = read_labels(ls);
      if (u.labels.size() != u.num_frames())
        throw IoError("corpus.tsv line " + std::to_string(line_no) + ": label count != frame count");
      for (int l : u.labels)
        if (l < 0 || static_cast<std::size_t>(l) >= corpus.phones.num_states())
          throw IoError("corpus.tsv line " + std::to_string(line_no) + ": label out of range");
    }
    if (cols[4] != kAbsent) u.transcript = split_phones(cols[4]);
    for (const std::string& p : u.transcript)
      if (!corpus.phones.find(p))
        throw IoError("corpus.tsv line " + std::to_string(line_no) + ": unknown phone " + p);
    if (cols.size() == 6 && cols[5] != kAbsent) u.ubm_frames = load_matrix(dir / cols[5]);
    corpus.utterances.push_back(std::move(u));
  }
  try {
    validate_corpus(corpus.utterances);
  } catch (const ContractError& e) {
    throw IoError(e.what());
  }
  return corpus;
}

}  // namespace ram

#endif  // RAM_CORPUS_HPP_
