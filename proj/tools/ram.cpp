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

// Command-line front end: one subcommand per pipeline step.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ram/corpus.hpp"
#include "ram/decode.hpp"
#include "ram/experiment.hpp"
#include "ram/features.hpp"
#include "ram/fmllr.hpp"
#include "ram/gmm.hpp"
#include "ram/grid_config.hpp"
#include "ram/ivector.hpp"
#include "ram/linalg.hpp"
#include "ram/network.hpp"
#include "ram/score.hpp"
#include "ram/synthetic.hpp"
#include "ram/training.hpp"

namespace fs = std::filesystem;

namespace {

using namespace ram;

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

const Matrix& ubm_stream(const Utterance& u) { return u.ubm_frames.empty() ? u.frames : u.ubm_frames; }

std::vector<Matrix> raw_frames(const Corpus& c) { return c.frames(); }

std::vector<std::vector<std::size_t>> singletons(std::size_t n) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({i});
  return out;
}

// Rows keyed "utt@f" hold the i-vector used from frame f on; other keys
// name an utterance or a speaker.
std::vector<Utterance> attach_ivectors(std::vector<Utterance> utts, const IvectorTable& table) {
  std::map<std::string, const Vector*> flat;
  std::map<std::string, std::map<std::size_t, const Vector*>> chunked;
  for (const auto& [key, v] : table) {
    const std::size_t at = key.rfind('@');
    if (at == std::string::npos) {
      flat[key] = &v;
      continue;
    }
    std::size_t pos = 0;
    const std::string tail = key.substr(at + 1);
    const unsigned long f = std::stoul(tail, &pos);
    if (pos != tail.size()) throw IoError("ivectors: bad frame index in key " + key);
    chunked[key.substr(0, at)][f] = &v;
  }
  for (Utterance& u : utts) {
    if (auto it = chunked.find(u.id); it != chunked.end()) {
      const auto& rows = it->second;
      if (rows.begin()->first != 0) throw IoError("ivectors: no frame-0 row for " + u.id);
      Matrix per_frame(u.num_frames(), rows.begin()->second->size());
      auto next = rows.begin();
      const Vector* cur = next->second;
      for (std::size_t t = 0; t < u.num_frames(); ++t) {
        while (next != rows.end() && next->first <= t) cur = (next++)->second;
        per_frame.set_row(t, *cur);
      }
      u.frames = append_ivector_rows(u.frames, per_frame);
    } else if (auto ut = flat.find(u.id); ut != flat.end()) {
      u.frames = append_ivector(u.frames, *ut->second);
    } else if (auto st = flat.find(u.speaker); st != flat.end()) {
      u.frames = append_ivector(u.frames, *st->second);
    } else {
      throw IoError("ivectors: no row for utterance " + u.id + " or speaker " + u.speaker);
    }
  }
  return utts;
}

std::vector<Utterance> with_optional_ivectors(std::vector<Utterance> utts, const std::string& file) {
  if (file.empty() || file == "none") return utts;
  std::ifstream is = open_in(file);
  return attach_ivectors(std::move(utts), read_ivectors(is));
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

// ---------------------------------------------------------------------------

void add_generate(CLI::App& app) {
  auto* cmd = app.add_subcommand("generate-corpus", "Write a synthetic train/dev/test corpus");
  auto spec = std::make_shared<SyntheticSpec>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--out", *out, "Output root directory")->required();
  cmd->add_option("--seed", spec->seed, "Random seed")->capture_default_str();
  cmd->add_option("--phones", spec->num_phones, "Phone count")->capture_default_str();
  cmd->add_option("--states", spec->states_per_phone, "States per phone")->capture_default_str();
  cmd->add_option("--dim", spec->dim, "Feature dimension")->capture_default_str();
  cmd->add_option("--train-speakers", spec->train_speakers)->capture_default_str();
  cmd->add_option("--dev-speakers", spec->dev_speakers)->capture_default_str();
  cmd->add_option("--test-speakers", spec->test_speakers)->capture_default_str();
  cmd->add_option("--utterances", spec->utterances_per_speaker, "Utterances per speaker")->capture_default_str();
  cmd->add_option("--subspace-dim", spec->subspace_dim, "Speaker subspace rank")->capture_default_str();
  cmd->add_option("--noise", spec->noise)->capture_default_str();
  cmd->add_option("--offset-scale", spec->offset_scale)->capture_default_str();
  cmd->add_option("--distortion", spec->distortion)->capture_default_str();
  cmd->callback([spec, out] {
    const SyntheticCorpus c = generate_synthetic_corpus(*spec);
    write_synthetic_corpus(*out, c);
    std::printf("wrote %zu/%zu/%zu utterances to %s\n", c.train.utterances.size(), c.dev.utterances.size(),
                c.test.utterances.size(), out->c_str());
  });
}

void add_normalize(CLI::App& app) {
  auto* cmd = app.add_subcommand("normalize", "Cepstral mean normalization of a corpus");
  struct Opts {
    std::string corpus, out, mode = "speaker", prior_from;
    std::size_t prior_frames = 100;
    bool variance = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--mode", o->mode)->check(CLI::IsMember({"utterance", "speaker", "online"}))->capture_default_str();
  cmd->add_option("--prior-from", o->prior_from, "Corpus supplying the online prior mean");
  cmd->add_option("--prior-frames", o->prior_frames)->capture_default_str();
  cmd->add_flag("--variance", o->variance, "Also normalize variance");
  cmd->callback([o] {
    Corpus c = load_corpus(o->corpus);
    CmnConfig cfg;
    cfg.normalize_variance = o->variance;
    cfg.prior_frames = o->prior_frames;
    if (o->mode == "utterance") cfg.mode = CmnMode::kOfflineUtterance;
    if (o->mode == "speaker") cfg.mode = CmnMode::kOfflineSpeaker;
    if (o->mode == "online") {
      cfg.mode = CmnMode::kOnline;
      const Corpus prior = o->prior_from.empty() ? c : load_corpus(o->prior_from);
      std::tie(cfg.global_mean, cfg.global_variance) = corpus_moments(prior.utterances);
    }
    c.utterances = normalize_corpus(std::move(c.utterances), cfg);
    save_corpus(o->out, c);
  });
}

void add_train_ubm(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-ubm", "Train the i-vector UBM");
  struct Opts {
    std::string corpus, out;
    std::size_t components = kDeskUbmComponents, iterations = 10;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--components", o->components)->capture_default_str();
  cmd->add_option("--iterations", o->iterations)->capture_default_str();
  cmd->add_option("--seed", o->seed)->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    std::vector<Matrix> frames;
    for (const Utterance& u : c.utterances) frames.push_back(ubm_stream(u));
    Rng rng(derive_seed(o->seed, fnv1a64("ivector-ubm")));
    const UbmTrainResult r = train_ubm(vstack(frames), o->components, o->iterations, rng);
    save_gmm(o->out, r.model);
    std::printf("log-likelihood %.6f\n", r.log_likelihood.empty() ? 0.0 : r.log_likelihood.back());
  });
}

void add_train_extractor(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-extractor", "Train the total-variability matrix");
  struct Opts {
    std::string corpus, ubm, out;
    std::size_t dim = kDeskIvectorDim, iterations = 5;
    double max_count = kDefaultMaxCount;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--ubm", o->ubm)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--dim", o->dim)->capture_default_str();
  cmd->add_option("--iterations", o->iterations)->capture_default_str();
  cmd->add_option("--max-count", o->max_count)->capture_default_str();
  cmd->add_option("--seed", o->seed)->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    const GmmModel ubm = load_gmm(o->ubm);
    std::vector<Matrix> post;
    bool separate = false;
    for (const Utterance& u : c.utterances) {
      post.push_back(gmm_posteriors(ubm, ubm_stream(u)));
      separate = separate || !u.ubm_frames.empty();
    }
    GmmModel stats_model = ubm;
    if (separate) {
      const Matrix raw = vstack(raw_frames(c));
      stats_model = gmm_mstep(ubm, raw, vstack(post), variance_floor(raw));
    }
    std::vector<BwStats> stats;
    for (const auto& group : group_by_speaker(c.speakers())) {
      BwStats s(stats_model.num_components(), stats_model.dim());
      for (std::size_t i : group) s += accumulate_stats(stats_model, c.utterances[i].frames, post[i]);
      stats.push_back(saturate_stats(s, o->max_count));
    }
    Rng rng(derive_seed(o->seed, fnv1a64("ivector-extractor")));
    const ExtractorTrainResult r = train_extractor(stats_model, stats, o->dim, o->iterations, rng);
    save_extractor(o->out, r.extractor);
    std::printf("objective %.6f\n", r.objective.empty() ? 0.0 : r.objective.back());
  });
}

void add_extract_ivectors(CLI::App& app) {
  auto* cmd = app.add_subcommand("extract-ivectors", "Extract i-vectors to a TSV table");
  struct Opts {
    std::string mode, ubm, extractor, corpus, out;
    bool pseudo = false;
    std::size_t chunk = kDefaultChunk;
    double max_count = kDefaultMaxCount;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--mode", o->mode)->required()->check(CLI::IsMember({"online", "offline-spk", "offline-utt"}));
  cmd->add_flag("--pseudo-speakers", o->pseudo, "Group utterances in pairs of one speaker");
  cmd->add_option("--ubm", o->ubm)->required();
  cmd->add_option("--extractor", o->extractor)->required();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--chunk", o->chunk, "Online update interval in frames")->capture_default_str();
  cmd->add_option("--max-count", o->max_count)->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    const GmmModel ubm = load_gmm(o->ubm);
    const IVectorExtractor ext = load_extractor(o->extractor);
    const GmmModel& stats_model = ext.ubm();
    const std::vector<Utterance>& utts = c.utterances;
    auto post = [&](std::size_t i) { return gmm_posteriors(ubm, ubm_stream(utts[i])); };
    IvectorTable rows;
    if (o->mode == "offline-utt") {
      for (std::size_t i = 0; i < utts.size(); ++i) {
        const BwStats s = accumulate_stats(stats_model, utts[i].frames, post(i));
        rows.emplace_back(utts[i].id, extract_ivector(ext, saturate_stats(s, o->max_count)));
      }
    } else if (o->mode == "offline-spk") {
      const auto groups = o->pseudo ? make_pseudo_speakers(c.speakers()) : group_by_speaker(c.speakers());
      for (const auto& group : groups) {
        BwStats s(stats_model.num_components(), stats_model.dim());
        for (std::size_t i : group) s += accumulate_stats(stats_model, utts[i].frames, post(i));
        const Vector w = extract_ivector(ext, saturate_stats(s, o->max_count));
        if (o->pseudo) {
          for (std::size_t i : group) rows.emplace_back(utts[i].id, w);
        } else {
          rows.emplace_back(utts[group.front()].speaker, w);
        }
      }
    } else {
      const auto streams = o->pseudo ? make_pseudo_speakers(c.speakers()) : singletons(utts.size());
      for (const auto& stream : streams) {
        std::optional<BwStats> carry;
        for (std::size_t i : stream) {
          const Matrix p = post(i);
          const OnlineIvectors on =
              extract_online(ext, utts[i].frames, o->chunk, o->max_count, carry ? &*carry : nullptr, &p);
          for (std::size_t t = 0; t < utts[i].num_frames(); t += o->chunk) {
            const auto row = on.per_frame.row(t);
            rows.emplace_back(utts[i].id + "@" + std::to_string(t), Vector(row.begin(), row.end()));
          }
          carry = on.stats;
        }
      }
    }
    std::ofstream os = open_out(o->out);
    write_ivectors(os, rows);
  });
}

void add_train_gmm(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-gmm", "Train the speaker-independent GMM used for fMLLR");
  struct Opts {
    std::string corpus, out;
    std::size_t components = 32, iterations = 10;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--components", o->components)->capture_default_str();
  cmd->add_option("--iterations", o->iterations)->capture_default_str();
  cmd->add_option("--seed", o->seed)->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    Rng rng(derive_seed(o->seed, fnv1a64("fmllr-gmm")));
    const UbmTrainResult r = train_ubm(vstack(raw_frames(c)), o->components, o->iterations, rng);
    save_gmm(o->out, r.model);
    std::printf("log-likelihood %.6f\n", r.log_likelihood.empty() ? 0.0 : r.log_likelihood.back());
  });
}

void add_sat_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("sat-train", "Speaker adaptive training of a GMM");
  struct Opts {
    std::string gmm, corpus, out, transforms;
    std::size_t alternations = 2, iterations = 5;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--gmm", o->gmm)->required();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out, "Canonical GMM")->required();
  cmd->add_option("--transforms", o->transforms, "Per-speaker training transforms");
  cmd->add_option("--alternations", o->alternations)->capture_default_str();
  cmd->add_option("--iterations", o->iterations)->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    const auto groups = group_by_speaker(c.speakers());
    const SatResult r = sat_train(load_gmm(o->gmm), raw_frames(c), groups, o->alternations, o->iterations);
    save_gmm(o->out, r.gmm);
    if (!o->transforms.empty()) {
      TransformTable table;
      for (std::size_t g = 0; g < groups.size(); ++g)
        table.emplace_back(c.utterances[groups[g].front()].speaker, r.transforms[g]);
      save_transforms(o->transforms, table);
    }
  });
}

void add_estimate_fmllr(CLI::App& app) {
  auto* cmd = app.add_subcommand("estimate-fmllr", "Estimate unsupervised fMLLR transforms");
  struct Opts {
    std::string gmm, align_gmm, corpus, scope = "speaker", out;
    AdaptOptions adapt;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--gmm", o->gmm, "Model the transformed features are scored against")->required();
  cmd->add_option("--align-gmm", o->align_gmm, "First-pass alignment model (default --gmm)");
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--scope", o->scope)->check(CLI::IsMember({"speaker", "utterance"}))->capture_default_str();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--iterations", o->adapt.iterations, "Row sweeps per pass")->capture_default_str();
  cmd->add_option("--passes", o->adapt.passes)->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    const GmmModel gmm = load_gmm(o->gmm);
    const GmmModel align = o->align_gmm.empty() ? gmm : load_gmm(o->align_gmm);
    const bool spk = o->scope == "speaker";
    const auto groups = spk ? group_by_speaker(c.speakers()) : singletons(c.utterances.size());
    const AdaptedSet r = two_pass_adapt(align, gmm, raw_frames(c), groups, o->adapt);
    TransformTable table;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const Utterance& u = c.utterances[groups[g].front()];
      table.emplace_back(spk ? u.speaker : u.id, r.transforms[g]);
      std::printf("%s\t|det A| %.6f\n", table.back().first.c_str(), std::abs(determinant(r.transforms[g].a)));
    }
    save_transforms(o->out, table);
  });
}

void add_apply_fmllr(CLI::App& app) {
  auto* cmd = app.add_subcommand("apply-fmllr", "Apply fMLLR transforms to a corpus");
  struct Opts {
    std::string transforms, corpus, out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--transforms", o->transforms)->required();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->callback([o] {
    Corpus c = load_corpus(o->corpus);
    std::map<std::string, FmllrTransform> table;
    for (auto& [key, t] : load_transforms(o->transforms)) table[key] = t;
    for (Utterance& u : c.utterances) {
      auto it = table.find(u.id);
      if (it == table.end()) it = table.find(u.speaker);
      if (it == table.end()) throw IoError("no transform for utterance " + u.id + " or speaker " + u.speaker);
      u.frames = apply_fmllr(it->second, u.frames);
    }
    save_corpus(o->out, c);
  });
}

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train an acoustic model");
  struct Opts {
    std::string arch, features, dev, ivectors = "none", dev_ivectors = "none", out, log;
    ExperimentConfig config;
  };
  auto o = std::make_shared<Opts>();
  ModelSettings& m = o->config.model;
  cmd->add_option("--arch", o->arch)->required()->check(CLI::IsMember({"ff", "lstm", "gru", "relugru", "mrelugru"}));
  cmd->add_option("--features", o->features, "Training corpus")->required();
  cmd->add_option("--dev", o->dev, "Development corpus for early stopping")->required();
  cmd->add_option("--ivectors", o->ivectors, "Training i-vectors or none")->capture_default_str();
  cmd->add_option("--dev-ivectors", o->dev_ivectors, "Development i-vectors or none")->capture_default_str();
  cmd->add_option("--schedule", m.schedule, "desk, paper or a schedule file")->capture_default_str();
  cmd->add_option("--seed", o->config.seed)->capture_default_str();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--log", o->log, "Training log CSV (default <out>.log.csv)");
  cmd->add_option("--hidden", m.hidden, "Recurrent layer width")->capture_default_str();
  cmd->add_option("--layers", m.layers, "Recurrent layer count")->capture_default_str();
  cmd->add_option("--delay", m.delay, "Recurrent output delay")->capture_default_str();
  cmd->add_option("--ff-hidden", m.ff_hidden)->capture_default_str();
  cmd->add_option("--ff-layers", m.ff_layers)->capture_default_str();
  cmd->add_option("--context", m.context, "Frames stacked for ff")->capture_default_str();
  cmd->add_option("--dropout", m.dropout)->capture_default_str();
  cmd->add_option("--max-epochs", m.max_epochs, "Cap on epochs per stage, 0 for none")->capture_default_str();
  cmd->callback([o] {
    ExperimentConfig& c = o->config;
    c.arch = parse_cell_kind(o->arch);
    const Corpus train = load_corpus(o->features);
    const Corpus dev = load_corpus(o->dev);
    require(train.phones.symbols() == dev.phones.symbols(), "train: corpora use different phone inventories");
    const std::vector<Utterance> tr = with_optional_ivectors(train.utterances, o->ivectors);
    const std::vector<Utterance> dv = with_optional_ivectors(dev.utterances, o->dev_ivectors);
    require(!tr.empty() && !dv.empty(), "train: empty corpus");
    const NetworkConfig nc = network_config(c, tr.front().dim(), train.phones.num_states());
    Rng rng(derive_seed(c.seed, fnv1a64("init")));
    NetworkModel model = initialize_network(nc, tr, rng);
    const TrainResult r = train_staged(std::move(model), experiment_schedule(c), tr, dv,
                                       derive_seed(c.seed, fnv1a64("train")));
    save_network(o->out, r.model);
    std::ofstream log = open_out(o->log.empty() ? sibling(o->out, ".log.csv") : fs::path(o->log));
    write_training_log(log, r.log);
    if (!r.log.empty())
      std::printf("%zu epochs, final dev loss %.6f\n", r.log.size(), r.log.back().dev_loss);
  });
}

void add_build_bigram(CLI::App& app) {
  auto* cmd = app.add_subcommand("build-bigram", "Estimate a phone bigram from corpus transcripts");
  struct Opts {
    std::string corpus, out;
    double floor = 0.5;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--floor", o->floor, "Count added to every bigram")->capture_default_str();
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    std::vector<std::vector<int>> seqs, labels;
    for (const Utterance& u : c.utterances) {
      seqs.push_back(c.phones.encode(u.transcript));
      if (u.has_labels()) labels.push_back(u.labels);
    }
    std::ofstream os = open_out(o->out);
    write_bigram(os, build_bigram(seqs, c.phones.num_phones(), o->floor), c.phones);
    if (!labels.empty()) std::printf("self-loop %.6f\n", estimate_self_loop(labels));
  });
}

void add_transcripts(CLI::App& app) {
  auto* cmd = app.add_subcommand("transcripts", "Write the reference transcripts of a corpus");
  struct Opts {
    std::string corpus, out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->callback([o] {
    std::ofstream os = open_out(o->out);
    write_transcripts(os, load_corpus(o->corpus).transcripts());
  });
}

void add_decode(CLI::App& app) {
  auto* cmd = app.add_subcommand("decode", "Viterbi phone decoding");
  struct Opts {
    std::string model, bigram, corpus, out, ivectors = "none", self_loop_from;
    DecodeOptions decode;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--model", o->model)->required();
  cmd->add_option("--bigram", o->bigram)->required();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--ivectors", o->ivectors, "I-vectors or none")->capture_default_str();
  cmd->add_option("--lm-weight", o->decode.lm_weight)->capture_default_str();
  cmd->add_option("--self-loop", o->decode.self_loop, "HMM self-loop probability")->capture_default_str();
  cmd->add_option("--self-loop-from", o->self_loop_from, "Estimate the self-loop from this corpus's labels");
  cmd->callback([o] {
    const Corpus c = load_corpus(o->corpus);
    if (!o->self_loop_from.empty()) {
      std::vector<std::vector<int>> labels;
      for (const Utterance& u : load_corpus(o->self_loop_from).utterances) labels.push_back(u.labels);
      o->decode.self_loop = estimate_self_loop(labels);
    }
    const NetworkModel model = load_network(o->model);
    std::ifstream lm_in = open_in(o->bigram);
    const BigramModel lm = read_bigram(lm_in, c.phones);
    Transcripts hyps;
    for (const Utterance& u : with_optional_ivectors(c.utterances, o->ivectors))
      hyps[u.id] =
          c.phones.decode(viterbi_decode(posteriors(model, u.frames), model.log_priors, lm, c.phones, o->decode).phones);
    std::ofstream os = open_out(o->out);
    write_transcripts(os, hyps);
  });
}

void add_score(CLI::App& app) {
  auto* cmd = app.add_subcommand("score", "Phone error rate of hypotheses against references");
  struct Opts {
    std::string ref, hyp, map, alignment;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--ref", o->ref)->required();
  cmd->add_option("--hyp", o->hyp)->required();
  cmd->add_option("--map", o->map, "Scoring phone map");
  cmd->add_option("--alignment", o->alignment, "Per-utterance counts CSV (default <hyp>.align.csv)");
  cmd->callback([o] {
    std::ifstream ref_in = open_in(o->ref);
    std::ifstream hyp_in = open_in(o->hyp);
    Transcripts refs = read_transcripts(ref_in);
    Transcripts hyps = read_transcripts(hyp_in);
    if (!o->map.empty()) {
      const PhoneMap map = load_phone_map(o->map);
      refs = map_transcripts(refs, map);
      hyps = map_transcripts(hyps, map);
    }
    const PerReport r = compute_per(refs, hyps);
    std::ofstream os = open_out(o->alignment.empty() ? sibling(o->hyp, ".align.csv") : fs::path(o->alignment));
    write_alignment_csv(os, r);
    std::printf("PER %.2f%% (%zu errors / %zu phones)\n", r.per(), r.total.errors(), r.total.reference_length);
  });
}

void add_grid(CLI::App& app) {
  auto* cmd = app.add_subcommand("grid", "Run an experiment grid");
  struct Opts {
    std::string config, corpus, out, work_dir, map;
    std::size_t jobs = 1;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--config", o->config)->required();
  cmd->add_option("--corpus", o->corpus, "Root holding train/, dev/ and test/")->required();
  cmd->add_option("--out", o->out)->required();
  cmd->add_option("--jobs", o->jobs)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--work-dir", o->work_dir, "Artifact cache directory");
  cmd->add_option("--map", o->map, "Scoring phone map");
  cmd->callback([o] {
    std::ifstream cfg = open_in(o->config);
    const std::vector<ExperimentConfig> configs = parse_grid_config(cfg);
    ExperimentData data = load_experiment_data(o->corpus);
    if (!o->map.empty()) data.score_map = load_phone_map(o->map);
    ExperimentRunner runner(std::move(data), o->work_dir);
    const std::vector<ExperimentResult> results = run_grid(configs, runner, o->jobs);
    std::ofstream os = open_out(o->out);
    write_results_csv(os, results);
    for (const ExperimentResult& r : results)
      std::printf("%-40s %7.2f +- %.2f\n", r.id.c_str(), r.mean(), r.stddev());
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic modelling experiments with recurrent networks"};
  app.require_subcommand(1);
  add_generate(app);
  add_normalize(app);
  add_train_ubm(app);
  add_train_extractor(app);
  add_extract_ivectors(app);
  add_train_gmm(app);
  add_sat_train(app);
  add_estimate_fmllr(app);
  add_apply_fmllr(app);
  add_train(app);
  add_build_bigram(app);
  add_transcripts(app);
  add_decode(app);
  add_score(app);
  add_grid(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ram: %s\n", e.what());
    return 1;
  }
  return 0;
}
