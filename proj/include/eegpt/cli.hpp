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
/// \file cli.hpp
///
/// Run configuration, the gradient-check suite and the command front end.
///
/// Exit codes: 0 ok, 1 gradient check failed or internal error, 2 bad
/// configuration, 3 data or checkpoint problem, 4 numeric divergence.
///
#ifndef EEGPT_CLI_HPP_
#define EEGPT_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegpt/dataio.hpp"
#include "eegpt/ete.hpp"
#include "eegpt/gradcheck.hpp"
#include "eegpt/model_config.hpp"
#include "eegpt/train.hpp"

namespace eegpt::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Environment variable holding the default for --threads.
inline constexpr const char* kThreadsEnv = "EEGPT_THREADS";

// -- configuration ------------------------------------------------------------------------

data::LabelRule parse_label_rule(const std::string& s);
std::string label_rule_name(data::LabelRule r);

json to_json(const data::SyntheticSpec& s);
/// Missing keys keep their defaults; unknown keys are rejected.
data::SyntheticSpec synthetic_spec_from_json(const json& j);

/// Workload of the scaling grid (the harness generates its own data).
struct ScalingWorkload {
  std::size_t corpus_electrodes = 32;
  std::size_t corpus_windows = 80;
  std::size_t task_windows = 200;
  std::vector<std::string> task_electrodes = {"FZ", "CZ", "PZ", "OZ"};
  int task_classes = 4;
  double band_gain = 1.5;
};

struct DataSection {
  std::optional<data::SyntheticSpec> synthetic;  // gen-synthetic, or pretrain without a path
  std::optional<fs::path> pretrain;              // EEGB corpus
  std::vector<fs::path> tasks;                   // labelled EEGB datasets
  std::optional<fs::path> checkpoint;            // encoder checkpoint or pretrain run
  std::optional<fs::path> finetune;              // finetune run or graph checkpoint
  std::uint64_t split_seed = 0;
  ScalingWorkload scaling;
};

struct TrainSection {
  ete::Objective objective = ete::Objective::kAutoregressive;
  ete::Metric metric = ete::Metric::kL2;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  train::AdamWConfig optimizer;
  std::optional<double> warmup_ratio;  // unset: 0.03 pretraining, 0.1 fine-tuning
  double mask_ratio = 0.5;
  std::size_t eval_every = 100;
  std::size_t eval_sequences = 256;
  std::size_t checkpoint_every = 0;
  std::optional<fs::path> resume;
  train::FinetuneMode mode = train::FinetuneMode::kJoint;
  std::size_t epochs = 10;
  bool center_nodes = true;
  std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
};

/// {model, data, train, seeds}. `model` takes {"preset", "name", "ete", "teg"}
/// plus an optional "ladder" list of the same shape for the scaling grid.
struct RunConfig {
  ModelConfig model;
  std::vector<ModelConfig> ladder;
  DataSection data;
  TrainSection train;
  std::vector<std::uint64_t> seeds = {0};
};

/// Strict parse: ConfigError on unknown keys, wrong types or bad values.
RunConfig parse_run_config(const json& j);
RunConfig load_run_config(const fs::path& path);
/// Every field, defaults included.
json to_json(const RunConfig& c);

train::PretrainConfig pretrain_config(const RunConfig& c, std::uint64_t seed);
train::FinetuneConfig finetune_config(const RunConfig& c, std::uint64_t seed);

// -- gradient check suite --------------------------------------------------------------

struct GradcheckGroup {
  std::string label;  // e.g. "ete.ar.l2"
  nk::GradcheckReport report;
};

/// scope: numkit (every primitive), ete (Tiny encoder, both objectives, all
/// three metrics, every parameter), teg (Tiny graph over a frozen Tiny encoder
/// on a mixed two-task batch) or all. `inject_fault` adds a primitive with a
/// deliberately wrong backward, as a negative control.
std::vector<GradcheckGroup> run_gradcheck_suite(const std::string& scope, bool inject_fault = false,
                                                double epsilon = 1e-6, double tolerance = 1e-5);

// -- commands -----------------------------------------------------------------------------

/// Parses argv, dispatches and maps errors onto exit codes.
int run(int argc, const char* const* argv);

}  // namespace eegpt::cli

#endif  // EEGPT_CLI_HPP_
