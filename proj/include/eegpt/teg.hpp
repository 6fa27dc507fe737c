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
/// \file teg.hpp
///
/// Electrode graph over the full vocabulary. A sample activates the nodes of
/// its own electrodes (base row + encoder representation); graph attention
/// then runs among the active nodes only, the active rows are mean-pooled and
/// a per-task linear head produces logits.
///
/// Each layer: x += ReLU(per-head masked attention over W norm(x)), then
/// x += W2 ReLU(W1 norm(x)). Pooling reads norm(x) after the last layer.
///
#ifndef EEGPT_TEG_HPP_
#define EEGPT_TEG_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegpt/ete.hpp"
#include "eegpt/model_config.hpp"
#include "eegpt/numkit.hpp"
#include "eegpt/rng.hpp"

namespace eegpt::teg {

using nk::NamedTensor;
using nk::Tensor;

struct SubgraphActivation {
  std::vector<std::size_t> active_ids;
  /// ContractError for an empty set, an id >= 138 or a duplicate.
  void validate() const;
};

/// z[e] = encoder residual stream at the last position of electrode e's
/// stream. `assembled` is [E S x C] as built by tok::assemble_finetune.
Tensor extract_electrode_repr(const ete::EteModel& encoder, const Tensor& assembled,
                              std::size_t seq_len);

struct TaskHead {
  int num_classes = 0;
  Tensor weight;  // [d x K]
  Tensor bias;    // [1 x K]
};

struct TegInput {
  Tensor z;  // [E x d], rows in active_ids order
  SubgraphActivation activation;
  std::string task_id;
};

class TegModel {
 public:
  struct Layer {
    Tensor norm1;
    Tensor w;  // [d x d]; head h uses columns h hs .. (h+1) hs
    Tensor a;  // [2 hs x heads]; column h = [a1_h; a2_h]
    Tensor norm2;
    Tensor ffn_in;   // [d x I]
    Tensor ffn_out;  // [I x d]
  };

  TegModel(const TegConfig& config, Rng& rng);

  const TegConfig& config() const { return config_; }

  void register_task(const std::string& task_id, int num_classes, Rng& rng);
  bool has_task(const std::string& task_id) const { return heads.count(task_id) != 0; }
  /// TaskError when unregistered.
  const TaskHead& head(const std::string& task_id) const;
  std::vector<std::pair<std::string, int>> tasks() const;

  std::vector<NamedTensor> named_parameters() const;
  void set_trainable(bool on);

  /// Node table with z added onto the active rows; the table is not modified.
  Tensor activate(const Tensor& z, const SubgraphActivation& act) const;

  /// One layer on the full [138 x d] feature table; inactive rows pass through.
  Tensor graph_attention_layer(const Tensor& features, const SubgraphActivation& act,
                               std::size_t layer) const;

  /// Final norm, mean over active rows, task head: logits [1 x K].
  Tensor pool_and_classify(const Tensor& features, const SubgraphActivation& act,
                           const std::string& task_id) const;

  /// activate -> K layers -> pool_and_classify.
  Tensor forward_solo(const Tensor& z, const SubgraphActivation& act,
                      const std::string& task_id) const;

  /// All samples' active rows stacked and isolated by a block-diagonal
  /// additive mask. Returns one [1 x K_task] logit row per sample.
  std::vector<Tensor> batch_forward(std::span<const TegInput> batch) const;

  /// Attention weights of one head of one layer on the active rows, for
  /// inspection and tests: [n x n].
  Tensor attention_weights(const Tensor& active_rows, std::size_t layer, std::size_t head,
                           const std::optional<Tensor>& mask = std::nullopt) const;

  // Parameters are public so tests can set them by hand.
  Tensor nodes;          // [138 x d]
  Tensor special_token;  // [C]
  std::vector<Layer> layers;
  Tensor norm_f;  // [d]
  std::map<std::string, TaskHead> heads;

 private:
  Tensor layer_rows(const Tensor& x, std::size_t layer, const std::optional<Tensor>& mask) const;

  TegConfig config_;
};

/// Mean cross-entropy of per-sample logits against labels.
Tensor classification_loss(std::span<const Tensor> logits, std::span<const int> labels);

void save(const std::filesystem::path& dir, const TegModel& model);
TegModel load(const std::filesystem::path& dir);

}  // namespace eegpt::teg

#endif  // EEGPT_TEG_HPP_
