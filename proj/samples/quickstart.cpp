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

// Runs a few grid cells on an in-memory synthetic corpus and prints the
// results table.

#include <iostream>
#include <vector>

#include "ram/experiment.hpp"
#include "ram/synthetic.hpp"

int main() {
  ram::SyntheticSpec spec;
  spec.train_speakers = 6;
  spec.utterances_per_speaker = 6;
  ram::SyntheticCorpus corpus = ram::generate_synthetic_corpus(spec);
  ram::ExperimentRunner runner({std::move(corpus.train), std::move(corpus.dev), std::move(corpus.test), {}});
  std::cout << "prior-only PER " << runner.prior_only_per() << "\n";

  std::vector<ram::ExperimentConfig> cells;
  for (ram::DataMode data : {ram::DataMode::kRaw, ram::DataMode::kCmnSpeaker}) {
    ram::ExperimentConfig c;
    c.data = data;
    c.arch = ram::CellKind::kFfRelu;
    c.repeats = 2;
    c.model.max_epochs = 5;
    cells.push_back(c);
  }
  ram::write_results_csv(std::cout, ram::run_grid(cells, runner, 1));
}
