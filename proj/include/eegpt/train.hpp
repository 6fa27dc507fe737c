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
/// \file train.hpp
///
/// Optimiser, learning-rate schedule, metrics logs, pretraining and
/// fine-tuning loops, evaluation.
///
#ifndef EEGPT_TRAIN_HPP_
#define EEGPT_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eegpt/dataio.hpp"
#include "eegpt/ete.hpp"
#include "eegpt/teg.hpp"
#include "eegpt/tokenizer.hpp"

namespace eegpt::train {

using nk::NamedTensor;
using nk::Tensor;

// -- optimiser ------------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay, bias-corrected moments:
///   p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(std::vector<NamedTensor> params, AdamWConfig config);

  /// One update with learning rate `lr` from the accumulated gradients.
  /// NumericError naming the parameter if any gradient is not finite.
  void step(double lr);
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  /// Moments as named tensors ("opt.m.<name>", "opt.v.<name>").
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state, std::size_t step);

 private:
  std::vector<NamedTensor> params_;
  std::vector<nk::Vector> m_, v_;
  AdamWConfig config_;
  std::size_t step_ = 0;
};

/// Linear warmup from 0 to base_lr over ceil(warmup_ratio total) steps, then
/// cosine decay to 0 at total_steps.
struct Schedule {
  double base_lr = 1e-3;
  double warmup_ratio = 0.03;
  std::size_t total_steps = 1;

  std::size_t warmup_steps() const;
  double lr(std::size_t step) const;
};

// -- metrics ------------------------------------------------------------------------------

using MetricValue = std::variant<double, std::int64_t, std::string>;
using MetricRecord = std::vector<std::pair<std::string, MetricValue>>;

/// Append-only metrics.jsonl plus metrics.csv with a fixed column list.
/// Doubles are written with 17 significant digits, so reruns compare
/// byte-for-byte.
class MetricsLog {
 public:
  MetricsLog() = default;
  MetricsLog(const std::filesystem::path& dir, std::vector<std::string> columns);

  void append(const MetricRecord& record);
  const std::vector<MetricRecord>& records() const { return records_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> columns_;
  std::vector<MetricRecord> records_;
};

std::string format_double(double v);

// -- pretraining ----------------------------------------------------------------------------

struct PretrainConfig {
  std::uint64_t seed = 0;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  AdamWConfig optimizer;
  double warmup_ratio = 0.03;
  ete::Metric metric = ete::Metric::kL2;
  double mask_ratio = 0.5;  // masked objective only
  std::size_t eval_every = 100;
  std::size_t eval_sequences = 256;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
};

struct PretrainResult {
  double initial_heldout = 0.0;
  double final_heldout = 0.0;
  std::size_t steps = 0;
  std::size_t tokens_seen = 0;
  std::vector<MetricRecord> metrics;
};

/// Held-out objective of the model on the first `max_sequences` blocks of
/// `corpus` (all when 0). Masked models use a mask stream fixed by `seed`.
double heldout_loss(const ete::EteModel& model, const tok::ElectrodeVocabulary& vocab,
                    const tok::GroupedCorpus& corpus, ete::Metric metric, double mask_ratio,
                    std::size_t max_sequences, std::uint64_t seed);

/// Minimises the encoder objective over batches of electrode sequences.
/// With a run directory, writes metrics.{jsonl,csv}, resumable states under
/// state/step_NNNNNNNN at the checkpoint cadence and at the end, and the final
/// encoder under checkpoint/. `resume_from` names a state directory; the
/// continuation replays the same batches as an uninterrupted run.
/// DivergenceError when the loss stops being finite; states already on disk
/// are left untouched.
PretrainResult pretrain(ete::EteModel& model, tok::ElectrodeVocabulary& vocab,
                        const tok::GroupedCorpus& train, const tok::GroupedCorpus& heldout,
                        const PretrainConfig& config,
                        const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                        const std::optional<std::filesystem::path>& resume_from = std::nullopt);

// -- fine-tuning ---------------------------------------------------------------------------

enum class FinetuneMode { kJoint, kSeparate };
FinetuneMode parse_mode(const std::string& s);
std::string mode_name(FinetuneMode m);

struct TaskData {
  std::string task_id;
  int num_classes = 0;
  data::Dataset train, val, test;
};

/// Builds a TaskData from one labelled dataset with the subject-aware 8:1:1
/// split. DataError when a split comes out empty.
TaskData make_task(const data::Dataset& ds, std::uint64_t split_seed);

struct FinetuneConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  AdamWConfig optimizer;
  double warmup_ratio = 0.1;
  /// Start each used node row at minus the mean training representation of
  /// its electrode.
  bool center_nodes = true;
};

struct TaskScore {
  std::string task_id;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t steps = 0;          // gradient steps that touched this task
  std::size_t sample_visits = 0;  // training samples of this task consumed
};

struct FinetuneResult {
  FinetuneMode mode = FinetuneMode::kJoint;
  std::vector<TaskScore> tasks;
  std::size_t total_steps = 0;
  std::vector<MetricRecord> metrics;
  /// The trained graph per task. Joint mode maps every task to one model.
  std::map<std::string, std::shared_ptr<teg::TegModel>> models;
};

/// Frozen encoder + vocabulary, trainable graph and special token. Joint mode
/// shares one graph across tasks and draws batches from the union of the
/// training sets; separate mode trains a fresh graph per task with the same
/// epochs and batch size, so each task sees the same number of sample visits.
FinetuneResult finetune(const ete::EteModel& encoder, const tok::ElectrodeVocabulary& vocab,
                        const std::vector<TaskData>& tasks, const TegConfig& teg_config,
                        FinetuneMode mode, const FinetuneConfig& config,
                        const std::optional<std::filesystem::path>& run_dir = std::nullopt);

// -- evaluation ------------------------------------------------------------------------------

struct EvalMetrics {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalMetrics score_predictions(std::span<const int> predicted, std::span<const int> labels,
                              int num_classes);

/// Argmax predictions of the encoder + graph pair on a dataset.
std::vector<int> predict(const ete::EteModel& encoder, const teg::TegModel& graph,
                         const data::Dataset& ds, const std::string& task_id,
                         std::size_t batch_size = 32);

EvalMetrics evaluate(const ete::EteModel& encoder, const teg::TegModel& graph,
                     const data::Dataset& ds, const std::string& task_id);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for one value
};
MeanStd mean_std(std::span<const double> xs);

}  // namespace eegpt::train

#endif  // EEGPT_TRAIN_HPP_
