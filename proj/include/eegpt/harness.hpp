// Copyright 2026 The EEGPT-desk Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

///
/// \file harness.hpp
///
/// Paired-seed experiment drivers: pretraining objective comparison, joint
/// versus separate fine-tuning, and the model-size x token-budget grid.
///
#ifndef EEGPT_HARNESS_HPP_
#define EEGPT_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eegpt/dataio.hpp"
#include "eegpt/model_config.hpp"
#include "eegpt/train.hpp"

namespace eegpt::harness {

/// Unlabelled pretraining corpus over the first `electrodes` vocabulary
/// entries, `windows` windows long.
data::SyntheticSpec pretrain_corpus_spec(std::uint64_t seed, std::size_t electrodes,
                                         std::size_t windows);

/// Labelled task over the named electrodes with one of the label rules.
data::SyntheticSpec task_spec(std::uint64_t seed, const std::string& task_id,
                              std::vector<std::string> electrodes, std::size_t windows,
                              data::LabelRule rule, int num_classes, double band_gain = 1.5);

/// Harness defaults: short pretraining, fine-tuning at 3e-3 for 10 epochs.
train::PretrainConfig default_pretrain(std::size_t steps);
train::FinetuneConfig default_finetune(std::size_t epochs);

struct PretrainedEncoder {
  ete::EteModel model;
  tok::ElectrodeVocabulary vocab;
  train::PretrainResult run;
};

/// Generates the corpus, splits it by subject and pretrains a fresh encoder.
/// steps == 0 returns the randomly initialised encoder. The encoder comes
/// back frozen.
PretrainedEncoder pretrain_encoder(const EteConfig& config, ete::Objective objective,
                                   const data::Dataset& corpus, const train::PretrainConfig& pc);

// -- pretraining objective comparison -------------------------------------------------------

struct ObjectiveConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string preset = "tiny";
  std::vector<ete::Metric> metrics = {ete::Metric::kL2};
  std::size_t corpus_electrodes = 32;
  std::size_t corpus_windows = 80;
  train::PretrainConfig pretrain = default_pretrain(2000);  // masked training only takes off late
  std::size_t task_windows = 1200;
  std::vector<std::string> task_electrodes = {"FZ", "CZ", "PZ", "OZ"};
  int task_classes = 4;
  double band_gain = 1.5;
  train::FinetuneConfig finetune = default_finetune(10);
};

struct ObjectiveRow {
  ete::Objective objective;
  ete::Metric metric;
  std::vector<double> accuracy;  // test accuracy per seed
  std::vector<double> heldout;   // final pretraining loss per seed
  train::MeanStd summary;
};

struct ObjectiveReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ObjectiveRow> rows;
  /// Per metric: seeds where the autoregressive accuracy >= the masked one.
  std::vector<std::size_t> ar_wins;
  std::string table() const;
};

ObjectiveReport compare_objectives(const ObjectiveConfig& config);

// -- joint versus separate --------------------------------------------------------------------

struct ModeConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string preset = "tiny";
  std::size_t corpus_electrodes = 32;
  std::size_t corpus_windows = 80;
  train::PretrainConfig pretrain = default_pretrain(500);
  std::size_t task_windows = 400;
  std::vector<std::string> task_a_electrodes = {"FZ", "CZ", "PZ", "C3", "C4"};
  std::vector<std::string> task_b_electrodes = {"CZ", "PZ", "OZ", "O1", "O2"};
  double band_gain = 1.5;
  train::FinetuneConfig finetune = default_finetune(5);
};

struct ModeRow {
  std::string task_id;
  std::vector<double> joint, separate;  // test accuracy per seed
  train::MeanStd joint_summary, separate_summary;
  double delta = 0.0;  // joint mean - separate mean
  std::size_t joint_visits = 0, separate_visits = 0;  // for the first seed
};

struct ModeReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ModeRow> rows;
  bool deterministic = false;     // the first seed rerun reproduced every logged number
  bool budgets_matched = false;   // per-task sample visits agree in every seed
  std::string table() const;
};

ModeReport compare_modes(const ModeConfig& config);

// -- scaling grid ----------------------------------------------------------------------------

struct ScalingConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<ModelConfig> ladder;  // empty: the three default toy configs
  std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t corpus_electrodes = 32;
  std::size_t corpus_windows = 80;
  train::PretrainConfig pretrain = default_pretrain(600);  // steps = full budget
  std::size_t task_windows = 200;
  std::vector<std::string> task_electrodes = {"FZ", "CZ", "PZ", "OZ"};
  int task_classes = 4;
  double band_gain = 1.5;
  train::FinetuneConfig finetune = default_finetune(3);
};

/// Three toy sizes sharing the tiny geometry: hidden 16, 32, 64.
std::vector<ModelConfig> default_ladder();

struct ScalingRow {
  std::uint64_t seed = 0;
  std::string config;
  std::size_t parameters = 0;
  double fraction = 0.0;
  std::size_t tokens = 0;
  double heldout_loss = 0.0;
  double accuracy = 0.0;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  /// Seeds where the largest config's full-budget loss <= the smallest's.
  std::size_t largest_wins = 0;
  std::size_t num_seeds = 0;
  /// config,parameters,seed,fraction,tokens,loss,accuracy
  std::string csv() const;
  /// Whitespace-separated blocks per config (one blank-line-separated index
  /// per config), mean over seeds, for gnuplot's `index`.
  std::string gnuplot() const;
};

ScalingReport run_scaling(const ScalingConfig& config);

}  // namespace eegpt::harness

#endif  // EEGPT_HARNESS_HPP_
