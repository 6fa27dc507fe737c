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
/// \file ete.hpp
///
/// Temporal encoder over one electrode's token stream.
///
/// Layout of a batch: B sequences of equal length S flattened into a
/// [B S x C] tensor. The encoder projects tokens to width d, adds learned
/// positions, runs L pre-norm blocks (multi-head attention, then a SwiGLU
/// feed-forward) and maps the normalised stream back to width C with a
/// two-layer SwiGLU head. `hidden` is the residual stream after the last block,
/// before the final norm.
///
#ifndef EEGPT_ETE_HPP_
#define EEGPT_ETE_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegpt/model_config.hpp"
#include "eegpt/numkit.hpp"
#include "eegpt/rng.hpp"
#include "eegpt/tokenizer.hpp"

namespace eegpt::ete {

using nk::NamedTensor;
using nk::Tensor;

enum class Metric { kL2, kL1, kCosine };
Metric parse_metric(const std::string& s);
std::string metric_name(Metric m);

/// Autoregressive (causal attention, next-token head) or masked
/// reconstruction (bidirectional attention plus a learned mask token).
enum class Objective { kAutoregressive, kMasked };
Objective parse_objective(const std::string& s);
std::string objective_name(Objective o);

/// (i, j) = 0 when j <= i, else the mask sentinel.
Tensor causal_mask(std::size_t seq_len);

/// Mean over rows of rho(pred_row - target_row). l2 and l1 average over the
/// row elements; cosine is 1 - cos(pred_row, target_row).
Tensor reconstruction_loss(const Tensor& predictions, const Tensor& targets, Metric metric);

/// Next-token loss from a prediction tensor laid out like `seqs`: the target
/// at position t (1..T) is read from the prediction at t - 1. Per-sequence
/// averages over T, batch mean over sequences.
Tensor ar_loss_from_predictions(const Tensor& seqs, const Tensor& predictions,
                                std::size_t seq_len, Metric metric);

/// ceil(ratio T) distinct positions from 1..T, sorted.
std::vector<std::size_t> mae_mask_positions(std::size_t T, double ratio, Rng& rng);

class EteModel {
 public:
  struct Block {
    Tensor norm1, wq, wk, wv, wo;
    Tensor norm2, ffn_gate, ffn_up, ffn_down;
  };
  struct Output {
    Tensor hidden;       // [B S x d]
    Tensor predictions;  // [B S x C]
  };

  EteModel(const EteConfig& config, Rng& rng, Objective objective = Objective::kAutoregressive);

  const EteConfig& config() const { return config_; }
  Objective objective() const { return objective_; }
  bool bidirectional() const { return objective_ == Objective::kMasked; }

  /// Stable order; names carry an "ete." prefix.
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;
  void set_trainable(bool on);

  /// LengthError when seq_len exceeds max_len or does not divide the rows.
  Output forward(const Tensor& seqs, std::size_t seq_len) const;
  /// The residual stream alone (forward().hidden without the prediction head).
  Tensor encode(const Tensor& seqs, std::size_t seq_len) const;

  /// Next-signal objective. ContractError when seq_len < 2.
  Tensor ar_loss(const Tensor& seqs, std::size_t seq_len, Metric metric = Metric::kL2) const;

  /// Masked reconstruction. Each sequence draws its own ceil(ratio T) signal
  /// positions from `rng`; the chosen flat rows are reported through `masked`.
  Tensor mae_forward_loss(const Tensor& seqs, std::size_t seq_len, double mask_ratio, Rng& rng,
                          Metric metric = Metric::kL2,
                          std::vector<std::size_t>* masked = nullptr) const;
  /// Same objective with the masked flat rows given explicitly.
  Tensor mae_loss_at(const Tensor& seqs, std::size_t seq_len,
                     std::span<const std::size_t> masked_rows, Metric metric) const;

  // Parameters are public so tests can set them by hand.
  Tensor in_proj;  // [C x d]
  Tensor pos;      // [max_len x d]
  std::vector<Block> blocks;
  Tensor norm_f;                          // [d]
  Tensor head_gate, head_up, head_down;   // [d x d], [d x d], [d x C]
  std::optional<Tensor> mask_token;       // [1 x C], masked objective only

 private:
  Tensor attention(const Tensor& xn, const Block& b, std::size_t batch, std::size_t seq_len,
                   const std::optional<Tensor>& mask) const;

  EteConfig config_;
  Objective objective_;
};

nlohmann::json checkpoint_config(const EteModel& model);

/// Encoder plus electrode vocabulary in the checkpoint container.
void save(const std::filesystem::path& dir, const EteModel& model,
          const tok::ElectrodeVocabulary& vocab);

struct LoadedEncoder {
  EteModel model;
  tok::ElectrodeVocabulary vocab;
};
LoadedEncoder load(const std::filesystem::path& dir);

}  // namespace eegpt::ete

#endif  // EEGPT_ETE_HPP_
