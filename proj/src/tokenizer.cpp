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

#include "eegpt/tokenizer.hpp"

#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::tok {

using Index = Eigen::Index;

ElectrodeVocabulary::ElectrodeVocabulary(std::size_t width, Rng& rng) {
  nk::Vector v(static_cast<Index>(kNumElectrodes * width));
  for (Index i = 0; i < v.size(); ++i) v[i] = 0.02 * rng.normal();
  embeddings_ = Tensor({kNumElectrodes, width}, std::move(v), true);
}

ElectrodeVocabulary::ElectrodeVocabulary(Tensor embeddings) : embeddings_(std::move(embeddings)) {
  if (embeddings_.rank() != 2 || embeddings_.dim(0) != kNumElectrodes) {
    throw DimensionError("vocabulary table must be [" + std::to_string(kNumElectrodes) +
                         "xC], got " + nk::shape_str(embeddings_.shape()));
  }
}

std::size_t ElectrodeVocabulary::size() const { return kNumElectrodes; }

std::size_t ElectrodeVocabulary::index(std::string_view name) const {
  return require_electrode(name);
}

std::string_view ElectrodeVocabulary::name(std::size_t id) const {
  if (id >= kNumElectrodes) throw VocabularyError("electrode id " + std::to_string(id) + " out of range");
  return kElectrodeNames[id];
}

// -- regrouping --------------------------------------------------------------------------

std::size_t GroupedCorpus::num_blocks() const {
  std::size_t n = 0;
  for (const auto& [id, blocks] : groups) n += blocks.size();
  return n;
}

std::vector<data::EegSample> GroupedCorpus::reconstruct() const {
  std::vector<data::EegSample> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& m = samples[i];
    auto& s = out[i];
    s.electrodes = m.electrodes;
    s.num_tokens = m.num_tokens;
    s.label = m.label;
    s.task_id = m.task_id;
    s.subject_id = m.subject_id;
  }
  for (const auto& [id, blocks] : groups) {
    for (const auto& b : blocks) {
      auto& s = out.at(b.sample);
      if (s.tokens.size() == 0) {
        s.tokens.resize(static_cast<Index>(s.electrodes.size() * s.num_tokens), b.tokens.cols());
      }
      s.electrode_block(b.slot) = b.tokens;
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, const ElectrodeBlock*>> GroupedCorpus::flatten() const {
  std::vector<std::pair<std::size_t, const ElectrodeBlock*>> out;
  out.reserve(num_blocks());
  for (const auto& [id, blocks] : groups) {
    for (const auto& b : blocks) out.emplace_back(id, &b);
  }
  return out;
}

GroupedCorpus reorganize(std::span<const data::EegSample> samples) {
  GroupedCorpus g;
  g.samples.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    s.validate();
    g.samples.push_back({s.electrodes, s.num_tokens, s.label, s.task_id, s.subject_id});
    for (std::size_t e = 0; e < s.num_electrodes(); ++e) {
      g.groups[s.electrodes[e]].push_back({i, e, Matrix(s.electrode_block(e))});
    }
  }
  return g;
}

GroupedCorpus reorganize(const data::Dataset& ds) { return reorganize(std::span(ds.samples)); }

// -- assembly ----------------------------------------------------------------------------

ElectrodeSequence assemble_pretrain(const Matrix& block, std::size_t electrode_id,
                                    const ElectrodeVocabulary& vocab) {
  const std::size_t ids[] = {electrode_id};
  const Matrix* blocks[] = {&block};
  return {electrode_id, assemble_pretrain_batch(ids, blocks, vocab), 0, 0};
}

Tensor assemble_pretrain_batch(std::span<const std::size_t> electrode_ids,
                               std::span<const Matrix* const> blocks,
                               const ElectrodeVocabulary& vocab) {
  if (electrode_ids.size() != blocks.size() || blocks.empty()) {
    throw ContractError("assemble_pretrain_batch: " + std::to_string(electrode_ids.size()) +
                        " ids for " + std::to_string(blocks.size()) + " blocks");
  }
  const std::size_t C = vocab.width();
  const std::size_t T = static_cast<std::size_t>(blocks[0]->rows());
  const std::size_t S = T + 1;
  Matrix flat = Matrix::Zero(static_cast<Index>(blocks.size() * S), static_cast<Index>(C));
  std::vector<std::size_t> cond_rows(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (static_cast<std::size_t>(blocks[b]->cols()) != C) {
      throw DimensionError("token width " + std::to_string(blocks[b]->cols()) +
                           " does not match embedding width " + std::to_string(C));
    }
    if (static_cast<std::size_t>(blocks[b]->rows()) != T) {
      throw DimensionError("blocks in one batch must share T");
    }
    if (electrode_ids[b] >= kNumElectrodes) {
      throw VocabularyError("electrode id " + std::to_string(electrode_ids[b]) + " out of range");
    }
    flat.middleRows(static_cast<Index>(b * S + 1), static_cast<Index>(T)) = *blocks[b];
    cond_rows[b] = b * S;
  }
  const Tensor cond = nk::gather_rows(vocab.embeddings(), electrode_ids);
  return nk::index_add_rows(Tensor::from_matrix(flat), cond_rows, cond);
}

Tensor assemble_finetune(const data::EegSample& sample, const Tensor& special_token) {
  const std::size_t C = sample.token_width();
  if (special_token.size() != C) {
    throw DimensionError("special token of width " + std::to_string(special_token.size()) +
                         " against tokens of width " + std::to_string(C));
  }
  const std::size_t E = sample.num_electrodes(), T = sample.num_tokens, S = T + 1;
  Matrix flat = Matrix::Zero(static_cast<Index>(E * S), static_cast<Index>(C));
  std::vector<std::size_t> last_rows(E), zeros(E, 0);
  for (std::size_t e = 0; e < E; ++e) {
    flat.middleRows(static_cast<Index>(e * S), static_cast<Index>(T)) = sample.electrode_block(e);
    last_rows[e] = e * S + T;
  }
  const Tensor c_rows = nk::gather_rows(nk::reshape(special_token, {1, C}), zeros);
  return nk::index_add_rows(Tensor::from_matrix(flat), last_rows, c_rows);
}

}  // namespace eegpt::tok
