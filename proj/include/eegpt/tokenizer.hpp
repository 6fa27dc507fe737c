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
/// \file tokenizer.hpp
///
/// Electrode-wise regrouping of samples and assembly of the per-electrode
/// sequences fed to the encoder.
///
/// Pretraining sequences put the electrode embedding first, followed by the T
/// signal tokens. Fine-tuning sequences put the T signal tokens first and the
/// shared summary token c last. Batches are flattened to a 2-D tensor with
/// one row per token, sequences back to back.
///
#ifndef EEGPT_TOKENIZER_HPP_
#define EEGPT_TOKENIZER_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eegpt/dataio.hpp"
#include "eegpt/numkit.hpp"
#include "eegpt/rng.hpp"

namespace eegpt::tok {

using nk::Matrix;
using nk::Tensor;

class ElectrodeVocabulary {
 public:
  /// Gaussian N(0, 0.02^2) rows of the given width.
  ElectrodeVocabulary(std::size_t width, Rng& rng);
  explicit ElectrodeVocabulary(Tensor embeddings);

  std::size_t size() const;
  std::size_t width() const { return embeddings_.cols(); }
  /// Case-insensitive; VocabularyError for unknown names.
  std::size_t index(std::string_view name) const;
  std::string_view name(std::size_t id) const;

  const Tensor& embeddings() const { return embeddings_; }
  nk::NamedTensor named_parameter() const { return {"vocab.embeddings", embeddings_}; }

 private:
  Tensor embeddings_;
};

/// One electrode's T x C token block and where it came from.
struct ElectrodeBlock {
  std::size_t sample = 0;  // index into GroupedCorpus::samples
  std::size_t slot = 0;    // electrode position inside that sample
  Matrix tokens;
};

struct SampleMeta {
  std::vector<std::size_t> electrodes;
  std::size_t num_tokens = 0;
  std::optional<int> label;
  std::optional<std::string> task_id;
  std::string subject_id;
};

struct GroupedCorpus {
  std::map<std::size_t, std::vector<ElectrodeBlock>> groups;  // electrode id -> blocks
  std::vector<SampleMeta> samples;

  std::size_t num_blocks() const;
  /// Inverse of reorganize: the original samples, in order.
  std::vector<data::EegSample> reconstruct() const;
  /// (electrode id, block) pairs in ascending id then insertion order.
  std::vector<std::pair<std::size_t, const ElectrodeBlock*>> flatten() const;
};

GroupedCorpus reorganize(std::span<const data::EegSample> samples);
GroupedCorpus reorganize(const data::Dataset& ds);

struct ElectrodeSequence {
  std::size_t electrode_id = 0;
  Tensor tokens;  // (T + 1) x C, row 0 = embedding
  std::size_t sample = 0;
  std::size_t slot = 0;
};

ElectrodeSequence assemble_pretrain(const Matrix& block, std::size_t electrode_id,
                                    const ElectrodeVocabulary& vocab);

/// B sequences stacked into [B (T+1) x C]; row b (T+1) is embedding ids[b].
Tensor assemble_pretrain_batch(std::span<const std::size_t> electrode_ids,
                               std::span<const Matrix* const> blocks,
                               const ElectrodeVocabulary& vocab);

/// [E (T+1) x C]: electrode e occupies rows e (T+1) .. e (T+1) + T, with c at
/// the last of those rows.
Tensor assemble_finetune(const data::EegSample& sample, const Tensor& special_token);

}  // namespace eegpt::tok

#endif  // EEGPT_TOKENIZER_HPP_
