// Copyright 2026 PPT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal end-to-end walk through the library: generate a synthetic elevator
// evolution, pretrain on one auxiliary pair, prompt-tune, and report the
// held-out Huber loss.

#include <iostream>

#include "ppt/ppt.hpp"

int main() {
  using namespace ppt;

  DataConfig data;
  data.n_source = 300;
  data.n_target = 60;
  data.n_test = 60;
  data.n_pretrain_pairs = 1;
  data.pretrain_n = 120;

  ModelConfig model = ModelConfig::desk_profile(data.F);
  UQConfig uq;
  uq.K = 24;
  uq.indicator_epochs = 1;
  uq.indicator_train_cap = 64;
  TrainConfig train;
  train.max_epochs = 10;

  const uint64_t seed = 7;
  const EvolutionCase c = provision_case(data, seed);

  std::cout << "pretraining on " << c.pretrain_pairs.size() << " pair(s)...\n";
  PretrainResult pre = pretrain(c.pretrain_pairs, model, uq, train, seed);
  std::cout << "  time_pretrain_s = " << format9(pre.time_pretrain_s) << "\n";

  std::cout << "prompt tuning on " << c.label << "...\n";
  TuneResult tuned = prompt_tune(pre.twins, c.tune_pair, model, uq, train, seed);
  std::cout << "  epochs = " << tuned.record.stopped_epoch
            << ", time_s = " << format9(tuned.time_s) << "\n";

  TwinPair twins = tuned.twins;
  std::cout << "held-out Huber = " << format9(evaluate(twins, c.test, train.delta)) << "\n";
  return 0;
}
