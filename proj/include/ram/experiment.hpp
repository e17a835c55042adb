// ram/experiment.hpp

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

// Experiment grid: feature mode x i-vector mode x architecture, each cell
// repeated with independent seeds and summarized as mean and population
// standard deviation of the test PER.
//
// One repeat runs normalize -> adapt -> append i-vectors -> train -> decode
// -> score. The seed of repeat r of cell `id` is
// derive_seed(config.seed, fnv1a64(id), r) unless explicit seeds are given,
// so results do not depend on grid order or on the number of workers.
//
// Shared artifacts (fMLLR GMMs and transforms, UBM and extractor, trained
// networks) are computed once per runner. With a work directory they are
// also written as <kind>-<hash>.* where the hash covers the corpus contents
// and every setting that influences the artifact; existing files are loaded
// instead of recomputed.

#ifndef RAM_EXPERIMENT_HPP_
#define RAM_EXPERIMENT_HPP_

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ram/cells.hpp"
#include "ram/corpus.hpp"
#include "ram/decode.hpp"
#include "ram/error.hpp"
#include "ram/features.hpp"
#include "ram/fmllr.hpp"
#include "ram/gmm.hpp"
#include "ram/ivector.hpp"
#include "ram/network.hpp"
#include "ram/phones.hpp"
#include "ram/rng.hpp"
#include "ram/score.hpp"
#include "ram/training.hpp"

namespace ram {

enum class DataMode { kFmllr, kRaw, kCmnSpeaker, kCmnUtterance };

inline constexpr std::array<DataMode, 4> kAllDataModes = {DataMode::kFmllr, DataMode::kRaw, DataMode::kCmnSpeaker,
                                                          DataMode::kCmnUtterance};

inline std::string to_string(DataMode m) {
  switch (m) {
    case DataMode::kFmllr: return "fmllr";
    case DataMode::kRaw: return "raw";
    case DataMode::kCmnSpeaker: return "cmn_speaker";
    case DataMode::kCmnUtterance: return "cmn_utterance";
  }
  return "?";
}

inline DataMode parse_data_mode(const std::string& s) {
  for (DataMode m : kAllDataModes)
    if (to_string(m) == s) return m;
  throw ContractError("unknown data mode '" + s + "' (fmllr, raw, cmn_speaker, cmn_utterance)");
}

enum class IvectorScope { kNone, kOfflineSpeaker, kOfflineUtterance, kOnline };

inline std::string to_string(IvectorScope s) {
  switch (s) {
    case IvectorScope::kNone: return "none";
    case IvectorScope::kOfflineSpeaker: return "off_spk";
    case IvectorScope::kOfflineUtterance: return "off_utt";
    case IvectorScope::kOnline: return "online";
  }
  return "?";
}

inline IvectorScope parse_ivector_scope(const std::string& s) {
  for (IvectorScope v : {IvectorScope::kNone, IvectorScope::kOfflineSpeaker, IvectorScope::kOfflineUtterance,
                         IvectorScope::kOnline})
    if (to_string(v) == s) return v;
  throw ContractError("unknown i-vector scope '" + s + "'");
}

/// Training / test extraction scope, written "train/test" or "none".
struct IvectorMode {
  IvectorScope train = IvectorScope::kNone;
  IvectorScope test = IvectorScope::kNone;

  bool enabled() const { return train != IvectorScope::kNone; }
  friend bool operator==(const IvectorMode&, const IvectorMode&) = default;
};

inline constexpr std::array<IvectorMode, 6> kAllIvectorModes = {{
    {IvectorScope::kNone, IvectorScope::kNone},
    {IvectorScope::kOfflineSpeaker, IvectorScope::kOfflineSpeaker},
    {IvectorScope::kOfflineUtterance, IvectorScope::kOfflineUtterance},
    {IvectorScope::kOnline, IvectorScope::kOfflineSpeaker},
    {IvectorScope::kOnline, IvectorScope::kOfflineUtterance},
    {IvectorScope::kOnline, IvectorScope::kOnline},
}};

inline std::string to_string(const IvectorMode& m) {
  if (!m.enabled()) return "none";
  return to_string(m.train) + "/" + to_string(m.test);
}

inline IvectorMode parse_ivector_mode(const std::string& s) {
  for (const IvectorMode& m : kAllIvectorModes)
    if (to_string(m) == s) return m;
  throw ContractError("unknown i-vector mode '" + s +
                      "' (none, off_spk/off_spk, off_utt/off_utt, online/off_spk, online/off_utt, online/online)");
}

inline constexpr std::array<CellKind, 5> kAllArchitectures = {CellKind::kFfRelu, CellKind::kLstm, CellKind::kGru,
                                                              CellKind::kReluGru, CellKind::kMReluGru};

struct ModelSettings {
  std::size_t hidden = 64;  // recurrent models
  std::size_t layers = 4;
  std::size_t delay = 3;
  std::size_t ff_hidden = 64;
  std::size_t ff_layers = 4;
  std::size_t context = 11;  // FF frame stacking
  double dropout = 0.0;
  std::string schedule = "desk";  // desk | paper | path to a schedule file
  std::size_t max_epochs = 0;     // caps every stage when > 0
};

struct ArtifactSettings {
  std::size_t ubm_components = kDeskUbmComponents;
  std::size_t ivector_dim = kDeskIvectorDim;
  std::size_t ubm_iterations = 10;
  std::size_t extractor_iterations = 5;
  std::size_t chunk = kDefaultChunk;
  double max_count = kDefaultMaxCount;
  std::size_t fmllr_components = 32;
  std::size_t fmllr_gmm_iterations = 10;
  std::size_t fmllr_iterations = 5;
  std::size_t sat_alternations = 2;
};

struct DecodeSettings {
  double lm_weight = 1.0;
  double lm_floor = 0.5;
  double self_loop = 0.0;  // 0 estimates it from the training labels
};

struct ExperimentConfig {
  DataMode data = DataMode::kCmnSpeaker;
  IvectorMode ivectors;
  CellKind arch = CellKind::kGru;
  std::size_t repeats = 10;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // explicit per-repeat seeds, overrides `seed`
  ModelSettings model;
  ArtifactSettings artifacts;
  DecodeSettings decode;

  /// Grid cell id; only this and the repeat index feed the run seed.
  std::string id() const { return to_string(data) + "|" + to_string(ivectors) + "|" + std::string(to_string(arch)); }

  std::uint64_t repeat_seed(std::size_t r) const {
    if (!seeds.empty()) return seeds.at(r);
    return derive_seed(seed, fnv1a64(id()), r);
  }

  void validate() const {
    require(repeats >= 1, "ExperimentConfig: repeats must be >= 1");
    require(seeds.empty() || seeds.size() == repeats, "ExperimentConfig: need one explicit seed per repeat");
    require(model.hidden >= 1 && model.layers >= 1 && model.ff_hidden >= 1 && model.ff_layers >= 1,
            "ExperimentConfig: model sizes must be >= 1");
    require(model.context % 2 == 1, "ExperimentConfig: context must be odd");
    require(model.dropout >= 0.0 && model.dropout < 1.0, "ExperimentConfig: dropout must be in [0, 1)");
    require(artifacts.ubm_components >= 1 && artifacts.ivector_dim >= 1 && artifacts.chunk >= 1 &&
                artifacts.max_count > 0.0 && artifacts.fmllr_components >= 1,
            "ExperimentConfig: artifact settings must be positive");
    require(decode.lm_floor > 0.0 && decode.lm_weight >= 0.0, "ExperimentConfig: bad decode settings");
    require(decode.self_loop == 0.0 || (decode.self_loop > 0.0 && decode.self_loop < 1.0),
            "ExperimentConfig: self_loop must be 0 (estimate) or in (0, 1)");
  }
};

inline double mean_of(std::span<const double> v) {
  require(!v.empty(), "mean_of: empty list");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population standard deviation (divides by N).
inline double population_std(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

struct ExperimentResult {
  std::string id;
  DataMode data = DataMode::kRaw;
  IvectorMode ivectors;
  CellKind arch = CellKind::kGru;
  std::vector<double> pers;

  double mean() const { return mean_of(pers); }
  double stddev() const { return population_std(pers); }
};

inline constexpr const char* kResultsHeader = "data,ivec_train,ivec_test,arch,mean_per,std_per,repeats";

inline void write_results_csv(std::ostream& os, std::span<const ExperimentResult> results) {
  os << kResultsHeader << '\n';
  char buf[64];
  for (const ExperimentResult& r : results) {
    os << to_string(r.data) << ',' << to_string(r.ivectors.train) << ',' << to_string(r.ivectors.test) << ','
       << to_string(r.arch) << ',';
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", r.mean(), r.stddev());
    os << buf << ',' << r.pers.size() << '\n';
  }
}

/// Train / dev / test corpora plus the scoring map.
struct ExperimentData {
  Corpus train, dev, test;
  std::optional<PhoneMap> score_map;
};

inline ExperimentData load_experiment_data(const std::filesystem::path& root) {
  ExperimentData d{load_corpus(root / "train"), load_corpus(root / "dev"), load_corpus(root / "test"), {}};
  require(d.train.phones.symbols() == d.dev.phones.symbols() && d.train.phones.symbols() == d.test.phones.symbols(),
          "load_experiment_data: splits use different phone inventories");
  return d;
}

struct SplitFeatures {
  std::vector<Utterance> train, dev, test;
};

namespace detail {

inline std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_corpus(std::uint64_t h, const Corpus& c) {
  for (const std::string& s : c.phones.symbols()) h = hash_bytes(h, s.data(), s.size() + 1);
  for (const Utterance& u : c.utterances) {
    h = hash_bytes(h, u.id.data(), u.id.size() + 1);
    h = hash_bytes(h, u.speaker.data(), u.speaker.size() + 1);
    h = hash_bytes(h, u.frames.data(), u.frames.size() * sizeof(double));
    h = hash_bytes(h, u.ubm_frames.data(), u.ubm_frames.size() * sizeof(double));
    h = hash_bytes(h, u.labels.data(), u.labels.size() * sizeof(int));
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<Matrix> frames_of(const std::vector<Utterance>& utts) {
  std::vector<Matrix> out;
  for (const Utterance& u : utts) out.push_back(u.frames);
  return out;
}

inline std::vector<std::string> speakers_of(const std::vector<Utterance>& utts) {
  std::vector<std::string> out;
  for (const Utterance& u : utts) out.push_back(u.speaker);
  return out;
}

inline const Matrix& ubm_stream(const Utterance& u) { return u.ubm_frames.empty() ? u.frames : u.ubm_frames; }

/// Computes a value once per key; concurrent callers wait for the first.
template <typename T>
class OnceCache {
 public:
  template <typename F>
  std::shared_ptr<const T> get(const std::string& key, F&& make) {
    std::promise<std::shared_ptr<const T>> promise;
    std::shared_future<std::shared_ptr<const T>> future;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const T>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const T>>> entries_;
};

}  // namespace detail

/// UBM plus extractor; the UBM gives posteriors on the UBM feature stream,
/// the extractor's own GMM centers statistics of the raw features.
struct IvectorArtifacts {
  GmmModel ubm;
  IVectorExtractor extractor;
};

struct FmllrArtifacts {
  GmmModel si;
  GmmModel canonical;
  TransformTable train, dev, test;  // keyed by speaker
};

inline NetworkConfig network_config(const ExperimentConfig& c, std::size_t input_dim, std::size_t output_dim) {
  if (c.arch == CellKind::kFfRelu)
    return {c.arch, input_dim, c.model.ff_hidden, c.model.ff_layers, output_dim, c.model.context, 0, c.model.dropout};
  return {c.arch, input_dim, c.model.hidden, c.model.layers, output_dim, 1, c.model.delay, c.model.dropout};
}

inline StageSchedule experiment_schedule(const ExperimentConfig& c) {
  const bool ff = c.arch == CellKind::kFfRelu;
  StageSchedule s;
  if (c.model.schedule == "desk") {
    s = ff ? desk_ff_schedule() : desk_rnn_schedule();
  } else if (c.model.schedule == "paper") {
    s = ff ? paper_ff_schedule() : paper_rnn_schedule();
  } else {
    std::ifstream is(c.model.schedule);
    if (!is) throw IoError("cannot open schedule " + c.model.schedule);
    s = parse_schedule(is);
  }
  if (c.model.max_epochs > 0)
    for (Stage& st : s.stages)
      st.max_epochs = st.max_epochs == 0 ? c.model.max_epochs : std::min(st.max_epochs, c.model.max_epochs);
  return s;
}

inline std::string describe(const StageSchedule& s) {
  std::ostringstream os;
  os.precision(17);
  for (const Stage& st : s.stages)
    os << static_cast<int>(st.optimizer) << ':' << st.learning_rate << ':' << st.batch_size << ':' << st.momentum
       << ':' << st.max_epochs << ';';
  return os.str();
}

/// Runs experiment cells against one set of corpora; safe to share between
/// threads.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentData data, std::filesystem::path work_dir = {})
      : data_(std::move(data)), work_dir_(std::move(work_dir)) {
    require(!data_.train.utterances.empty() && !data_.dev.utterances.empty() && !data_.test.utterances.empty(),
            "ExperimentRunner: train, dev and test must be non-empty");
    for (const Corpus* c : {&data_.train, &data_.dev, &data_.test})
      for (const Utterance& u : c->utterances)
        require(u.has_labels() && !u.transcript.empty(), "ExperimentRunner: utterance " + u.id +
                                                              " needs labels and a transcript");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = detail::hash_corpus(h, data_.train);
    h = detail::hash_corpus(h, data_.dev);
    h = detail::hash_corpus(h, data_.test);
    corpus_hash_ = detail::hex64(h);
    if (!work_dir_.empty()) std::filesystem::create_directories(work_dir_);
  }

  const ExperimentData& data() const { return data_; }
  const std::string& corpus_hash() const { return corpus_hash_; }

  /// Test PER of decoding with the state priors as posteriors.
  double prior_only_per() const {
    const PhoneInventory& inv = data_.train.phones;
    Vector counts(inv.num_states(), 1.0);
    double total = static_cast<double>(inv.num_states());
    for (const Utterance& u : data_.train.utterances)
      for (int l : u.labels) {
        counts[static_cast<std::size_t>(l)] += 1.0;
        total += 1.0;
      }
    Vector log_priors(counts.size());
    for (std::size_t s = 0; s < counts.size(); ++s) log_priors[s] = std::log(counts[s] / total);
    const DecodeSettings defaults;
    const BigramModel lm = bigram(defaults);
    const DecodeOptions opt{defaults.lm_weight, self_loop(defaults)};
    Transcripts hyps;
    for (const Utterance& u : data_.test.utterances) {
      Matrix post(u.num_frames(), inv.num_states());
      for (std::size_t t = 0; t < post.rows(); ++t)
        for (std::size_t s = 0; s < post.cols(); ++s) post(t, s) = counts[s] / total;
      hyps[u.id] = inv.decode(viterbi_decode(post, log_priors, lm, inv, opt).phones);
    }
    return score(hyps);
  }

  /// Features for every split after normalization, adaptation and i-vectors.
  std::shared_ptr<const SplitFeatures> features(const ExperimentConfig& c) {
    const std::string key = feature_key(c);
    return feature_cache_.get(key, [&] {
      SplitFeatures f = *base_features(c);
      if (c.ivectors.enabled()) {
        const std::shared_ptr<const IvectorArtifacts> iv = ivector_artifacts(c);
        f.train = with_ivectors(*iv, data_.train.utterances, f.train, c.ivectors.train, c.artifacts, true);
        f.dev = with_ivectors(*iv, data_.dev.utterances, f.dev, c.ivectors.test, c.artifacts, false);
        f.test = with_ivectors(*iv, data_.test.utterances, f.test, c.ivectors.test, c.artifacts, false);
      }
      return f;
    });
  }

  /// One full pipeline run; returns the test PER in percent.
  double run_repeat(const ExperimentConfig& c, std::size_t repeat) {
    c.validate();
    require(repeat < c.repeats, "run_repeat: repeat index out of range");
    const std::uint64_t seed = c.repeat_seed(repeat);
    const std::shared_ptr<const SplitFeatures> f = features(c);
    const NetworkModel model = trained_model(c, *f, seed);
    return decode_and_score(c, model, f->test);
  }

  ExperimentResult run(const ExperimentConfig& c) {
    ExperimentResult r{c.id(), c.data, c.ivectors, c.arch, {}};
    for (std::size_t i = 0; i < c.repeats; ++i) r.pers.push_back(run_repeat(c, i));
    return r;
  }

  double decode_and_score(const ExperimentConfig& c, const NetworkModel& model, const std::vector<Utterance>& test) const {
    const PhoneInventory& inv = data_.train.phones;
    const BigramModel lm = bigram(c.decode);
    const DecodeOptions opt{c.decode.lm_weight, self_loop(c.decode)};
    Transcripts hyps;
    for (const Utterance& u : test)
      hyps[u.id] = inv.decode(viterbi_decode(posteriors(model, u.frames), model.log_priors, lm, inv, opt).phones);
    return score(hyps);
  }

  double score(const Transcripts& hyps) const {
    Transcripts refs = data_.test.transcripts();
    if (data_.score_map) return compute_per(map_transcripts(refs, *data_.score_map), map_transcripts(hyps, *data_.score_map)).per();
    return compute_per(refs, hyps).per();
  }

  BigramModel bigram(const DecodeSettings& d) const {
    std::vector<std::vector<int>> seqs;
    for (const Utterance& u : data_.train.utterances) seqs.push_back(data_.train.phones.encode(u.transcript));
    return build_bigram(seqs, data_.train.phones.num_phones(), d.lm_floor);
  }

  double self_loop(const DecodeSettings& d) const {
    if (d.self_loop > 0.0) return d.self_loop;
    std::vector<std::vector<int>> labels;
    for (const Utterance& u : data_.train.utterances) labels.push_back(u.labels);
    return estimate_self_loop(labels);
  }

  std::shared_ptr<const IvectorArtifacts> ivector_artifacts(const ExperimentConfig& c) {
    const ArtifactSettings& a = c.artifacts;
    std::ostringstream desc;
    desc.precision(17);
    desc << "ivec|" << corpus_hash_ << '|' << c.seed << '|' << a.ubm_components << '|' << a.ivector_dim << '|'
         << a.ubm_iterations << '|' << a.extractor_iterations << '|' << a.max_count;
    const std::string key = desc.str();
    return ivector_cache_.get(key, [&] {
      const std::filesystem::path dir = artifact_path("ivec", key);
      if (!dir.empty() && std::filesystem::exists(dir / "extractor.bin"))
        return IvectorArtifacts{load_gmm(dir / "ubm.gmm"), load_extractor(dir / "extractor.bin")};
      IvectorArtifacts art = build_ivector_artifacts(c);
      if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        save_gmm(dir / "ubm.gmm", art.ubm);
        save_extractor(dir / "extractor.bin", art.extractor);
      }
      return art;
    });
  }

  std::shared_ptr<const FmllrArtifacts> fmllr_artifacts(const ExperimentConfig& c) {
    const ArtifactSettings& a = c.artifacts;
    std::ostringstream desc;
    desc << "fmllr|" << corpus_hash_ << '|' << c.seed << '|' << a.fmllr_components << '|' << a.fmllr_gmm_iterations
         << '|' << a.fmllr_iterations << '|' << a.sat_alternations;
    const std::string key = desc.str();
    return fmllr_cache_.get(key, [&] {
      const std::filesystem::path dir = artifact_path("fmllr", key);
      if (!dir.empty() && std::filesystem::exists(dir / "test.trans"))
        return FmllrArtifacts{load_gmm(dir / "si.gmm"), load_gmm(dir / "sat.gmm"), load_transforms(dir / "train.trans"),
                              load_transforms(dir / "dev.trans"), load_transforms(dir / "test.trans")};
      FmllrArtifacts art = build_fmllr_artifacts(c);
      if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        save_gmm(dir / "si.gmm", art.si);
        save_gmm(dir / "sat.gmm", art.canonical);
        save_transforms(dir / "train.trans", art.train);
        save_transforms(dir / "dev.trans", art.dev);
        save_transforms(dir / "test.trans", art.test);
      }
      return art;
    });
  }

 private:
  std::filesystem::path artifact_path(const char* kind, const std::string& key) const {
    if (work_dir_.empty()) return {};
    return work_dir_ / (std::string(kind) + "-" + detail::hex64(fnv1a64(key)));
  }

  std::string base_key(const ExperimentConfig& c) const {
    std::ostringstream os;
    os << to_string(c.data);
    if (c.data == DataMode::kFmllr)
      os << '|' << c.seed << '|' << c.artifacts.fmllr_components << '|' << c.artifacts.fmllr_gmm_iterations << '|'
         << c.artifacts.fmllr_iterations << '|' << c.artifacts.sat_alternations;
    return os.str();
  }

  std::string feature_key(const ExperimentConfig& c) const {
    std::ostringstream os;
    os.precision(17);
    os << base_key(c) << '|' << to_string(c.ivectors);
    if (c.ivectors.enabled())
      os << '|' << c.seed << '|' << c.artifacts.ubm_components << '|' << c.artifacts.ivector_dim << '|'
         << c.artifacts.ubm_iterations << '|' << c.artifacts.extractor_iterations << '|' << c.artifacts.chunk << '|'
         << c.artifacts.max_count;
    return os.str();
  }

  std::shared_ptr<const SplitFeatures> base_features(const ExperimentConfig& c) {
    return base_cache_.get(base_key(c), [&] {
      SplitFeatures f{data_.train.utterances, data_.dev.utterances, data_.test.utterances};
      switch (c.data) {
        case DataMode::kRaw: break;
        case DataMode::kCmnSpeaker:
        case DataMode::kCmnUtterance: {
          const CmnMode scope = c.data == DataMode::kCmnSpeaker ? CmnMode::kOfflineSpeaker : CmnMode::kOfflineUtterance;
          f.train = cmn_offline(std::move(f.train), scope);
          f.dev = cmn_offline(std::move(f.dev), scope);
          f.test = cmn_offline(std::move(f.test), scope);
          break;
        }
        case DataMode::kFmllr: {
          const std::shared_ptr<const FmllrArtifacts> art = fmllr_artifacts(c);
          apply_transforms(art->train, f.train);
          apply_transforms(art->dev, f.dev);
          apply_transforms(art->test, f.test);
          break;
        }
      }
      return f;
    });
  }

  static void apply_transforms(const TransformTable& table, std::vector<Utterance>& utts) {
    std::map<std::string, const FmllrTransform*> by_speaker;
    for (const auto& [key, t] : table) by_speaker[key] = &t;
    for (Utterance& u : utts) {
      auto it = by_speaker.find(u.speaker);
      if (it == by_speaker.end()) throw IoError("no fMLLR transform for speaker " + u.speaker);
      u.frames = apply_fmllr(*it->second, u.frames);
    }
  }

  static TransformTable keyed(const std::vector<Utterance>& utts, const std::vector<std::vector<std::size_t>>& groups,
                              const std::vector<FmllrTransform>& transforms) {
    TransformTable out;
    for (std::size_t g = 0; g < groups.size(); ++g) out.emplace_back(utts.at(groups[g].front()).speaker, transforms[g]);
    return out;
  }

  FmllrArtifacts build_fmllr_artifacts(const ExperimentConfig& c) const {
    const ArtifactSettings& a = c.artifacts;
    const std::vector<Utterance>& train = data_.train.utterances;
    Rng rng(derive_seed(c.seed, fnv1a64("fmllr-gmm")));
    FmllrArtifacts art;
    art.si = train_ubm(vstack(detail::frames_of(train)), a.fmllr_components, a.fmllr_gmm_iterations, rng).model;
    const auto train_groups = group_by_speaker(detail::speakers_of(train));
    const SatResult sat = sat_train(art.si, detail::frames_of(train), train_groups, a.sat_alternations,
                                    a.fmllr_iterations);
    art.canonical = sat.gmm;
    art.train = keyed(train, train_groups, sat.transforms);
    const AdaptOptions opt{a.fmllr_iterations, 2};
    for (auto [corpus, table] : {std::pair{&data_.dev, &art.dev}, std::pair{&data_.test, &art.test}}) {
      const auto groups = group_by_speaker(detail::speakers_of(corpus->utterances));
      const AdaptedSet adapted = two_pass_adapt(art.si, art.canonical, detail::frames_of(corpus->utterances), groups, opt);
      *table = keyed(corpus->utterances, groups, adapted.transforms);
    }
    return art;
  }

  IvectorArtifacts build_ivector_artifacts(const ExperimentConfig& c) const {
    const ArtifactSettings& a = c.artifacts;
    const std::vector<Utterance>& train = data_.train.utterances;
    std::vector<Matrix> ubm_frames, raw_frames;
    bool separate = false;
    for (const Utterance& u : train) {
      ubm_frames.push_back(detail::ubm_stream(u));
      raw_frames.push_back(u.frames);
      separate = separate || !u.ubm_frames.empty();
    }
    Rng rng(derive_seed(c.seed, fnv1a64("ivector-ubm")));
    const GmmModel ubm = train_ubm(vstack(ubm_frames), a.ubm_components, a.ubm_iterations, rng).model;
    GmmModel stats_model = ubm;
    if (separate) {
      const Matrix raw = vstack(raw_frames);
      const Matrix post = gmm_posteriors(ubm, vstack(ubm_frames));
      require(raw.cols() > 0, "i-vector training: empty features");
      stats_model = gmm_mstep(ubm, raw, post, variance_floor(raw));
    }
    std::vector<BwStats> per_speaker;
    for (const auto& group : group_by_speaker(detail::speakers_of(train))) {
      BwStats s(stats_model.num_components(), stats_model.dim());
      for (std::size_t i : group) s += utterance_stats(ubm, stats_model, train[i]);
      per_speaker.push_back(saturate_stats(s, a.max_count));
    }
    Rng trng(derive_seed(c.seed, fnv1a64("ivector-extractor")));
    IVectorExtractor ext =
        train_extractor(stats_model, per_speaker, a.ivector_dim, a.extractor_iterations, trng).extractor;
    return {ubm, std::move(ext)};
  }

  static BwStats utterance_stats(const GmmModel& ubm, const GmmModel& stats_model, const Utterance& u) {
    return accumulate_stats(stats_model, u.frames, gmm_posteriors(ubm, detail::ubm_stream(u)));
  }

  /// Appends i-vectors computed from the original (un-normalized) utterances.
  static std::vector<Utterance> with_ivectors(const IvectorArtifacts& art, const std::vector<Utterance>& raw,
                                              std::vector<Utterance> feats, IvectorScope scope,
                                              const ArtifactSettings& a, bool training) {
    const IVectorExtractor& ext = art.extractor;
    const GmmModel& stats_model = ext.ubm();
    switch (scope) {
      case IvectorScope::kNone: return feats;
      case IvectorScope::kOfflineUtterance:
        for (std::size_t i = 0; i < raw.size(); ++i) {
          const BwStats s = saturate_stats(utterance_stats(art.ubm, stats_model, raw[i]), a.max_count);
          feats[i].frames = append_ivector(feats[i].frames, extract_ivector(ext, s));
        }
        return feats;
      case IvectorScope::kOfflineSpeaker:
        for (const auto& group : group_by_speaker(detail::speakers_of(raw))) {
          BwStats s(stats_model.num_components(), stats_model.dim());
          for (std::size_t i : group) s += utterance_stats(art.ubm, stats_model, raw[i]);
          const Vector w = extract_ivector(ext, saturate_stats(s, a.max_count));
          for (std::size_t i : group) feats[i].frames = append_ivector(feats[i].frames, w);
        }
        return feats;
      case IvectorScope::kOnline: {
        const auto groups = training ? make_pseudo_speakers(detail::speakers_of(raw))
                                     : std::vector<std::vector<std::size_t>>{};
        std::vector<std::vector<std::size_t>> streams = groups;
        if (!training)
          for (std::size_t i = 0; i < raw.size(); ++i) streams.push_back({i});
        for (const auto& stream : streams) {
          std::optional<BwStats> carry;
          for (std::size_t i : stream) {
            const Matrix post = gmm_posteriors(art.ubm, detail::ubm_stream(raw[i]));
            const OnlineIvectors on =
                extract_online(ext, raw[i].frames, a.chunk, a.max_count, carry ? &*carry : nullptr, &post);
            feats[i].frames = append_ivector_rows(feats[i].frames, on.per_frame);
            carry = on.stats;
          }
        }
        return feats;
      }
    }
    return feats;
  }

  NetworkModel trained_model(const ExperimentConfig& c, const SplitFeatures& f, std::uint64_t seed) {
    const StageSchedule schedule = experiment_schedule(c);
    const NetworkConfig nc = network_config(c, f.train.front().frames.cols(), data_.train.phones.num_states());
    std::ostringstream desc;
    desc.precision(17);
    desc << "model|" << corpus_hash_ << '|' << feature_key(c) << '|' << static_cast<int>(nc.kind) << '|'
         << nc.input_dim << '|' << nc.hidden_dim << '|' << nc.num_layers << '|' << nc.output_dim << '|' << nc.context
         << '|' << nc.output_delay << '|' << nc.dropout << '|' << describe(schedule) << '|' << seed;
    const std::filesystem::path path =
        work_dir_.empty() ? std::filesystem::path{}
                          : work_dir_ / ("model-" + detail::hex64(fnv1a64(desc.str())) + ".bin");
    if (!path.empty() && std::filesystem::exists(path)) return load_network(path);
    Rng rng(derive_seed(seed, fnv1a64("init")));
    NetworkModel m = initialize_network(nc, f.train, rng);
    m = train_staged(std::move(m), schedule, f.train, f.dev, derive_seed(seed, fnv1a64("train"))).model;
    if (!path.empty()) {
      const std::filesystem::path tmp = path.string() + ".tmp" + detail::hex64(seed);
      save_network(tmp, m);
      std::filesystem::rename(tmp, path);
    }
    return m;
  }

  ExperimentData data_;
  std::filesystem::path work_dir_;
  std::string corpus_hash_;
  detail::OnceCache<SplitFeatures> base_cache_, feature_cache_;
  detail::OnceCache<IvectorArtifacts> ivector_cache_;
  detail::OnceCache<FmllrArtifacts> fmllr_cache_;
};

/// Runs every (config, repeat) pair on `jobs` worker threads; results come
/// back in config order regardless of scheduling.
inline std::vector<ExperimentResult> run_grid(const std::vector<ExperimentConfig>& configs, ExperimentRunner& runner,
                                              std::size_t jobs = 1) {
  require(jobs >= 1, "run_grid: jobs must be >= 1");
  std::vector<ExperimentResult> results;
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    configs[i].validate();
    results.push_back({configs[i].id(), configs[i].data, configs[i].ivectors, configs[i].arch,
                       std::vector<double>(configs[i].repeats, 0.0)});
    for (std::size_t r = 0; r < configs[i].repeats; ++r) tasks.emplace_back(i, r);
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) return;
      {
        std::lock_guard<std::mutex> lock(error_mu);
        if (error) return;
      }
      const auto [i, r] = tasks[k];
      try {
        results[i].pers[r] = runner.run_repeat(configs[i], r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(jobs, std::max<std::size_t>(tasks.size(), 1));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace ram

#endif  // RAM_EXPERIMENT_HPP_
