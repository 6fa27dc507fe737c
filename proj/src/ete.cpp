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

#include "eegpt/ete.hpp"

#include <algorithm>
#include <cmath>

#include "eegpt/checkpoint.hpp"
#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::ete {

using nk::Shape;
using nk::Vector;
using Index = Eigen::Index;

Metric parse_metric(const std::string& s) {
  if (s == "l2") return Metric::kL2;
  if (s == "l1") return Metric::kL1;
  if (s == "cos" || s == "cosine") return Metric::kCosine;
  throw ConfigError("unknown metric '" + s + "' (expected l2, l1 or cos)");
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kL2: return "l2";
    case Metric::kL1: return "l1";
    case Metric::kCosine: return "cos";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  if (s == "ar") return Objective::kAutoregressive;
  if (s == "mae") return Objective::kMasked;
  throw ConfigError("unknown objective '" + s + "' (expected ar or mae)");
}

std::string objective_name(Objective o) { return o == Objective::kMasked ? "mae" : "ar"; }

Tensor causal_mask(std::size_t n) {
  if (n == 0) throw ContractError("causal_mask needs a positive length");
  Vector v = Vector::Zero(static_cast<Index>(n * n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) v[static_cast<Index>(i * n + j)] = nk::kMaskSentinel;
  }
  return Tensor({n, n}, std::move(v));
}

Tensor reconstruction_loss(const Tensor& predictions, const Tensor& targets, Metric metric) {
  switch (metric) {
    case Metric::kL2: return nk::mean(nk::square(nk::sub(predictions, targets)));
    case Metric::kL1: return nk::mean(nk::abs(nk::sub(predictions, targets)));
    case Metric::kCosine:
      return nk::affine(nk::mean(nk::row_cosine(predictions, targets)), -1.0, 1.0);
  }
  throw ContractError("unknown metric");
}

Tensor ar_loss_from_predictions(const Tensor& seqs, const Tensor& predictions,
                                std::size_t seq_len, Metric metric) {
  if (seq_len < 2) throw ContractError("ar_loss needs at least one signal token (T = 0)");
  if (seqs.rows() % seq_len != 0 || predictions.rows() != seqs.rows()) {
    throw DimensionError("ar_loss: " + nk::shape_str(seqs.shape()) + " and " +
                         nk::shape_str(predictions.shape()) + " with sequence length " +
                         std::to_string(seq_len));
  }
  const std::size_t B = seqs.rows() / seq_len, T = seq_len - 1;
  std::vector<std::size_t> pred_rows, target_rows;
  pred_rows.reserve(B * T);
  target_rows.reserve(B * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 1; t <= T; ++t) {
      pred_rows.push_back(b * seq_len + t - 1);
      target_rows.push_back(b * seq_len + t);
    }
  }
  // Equal T per sequence, so the mean over all rows is the mean of means.
  return reconstruction_loss(nk::gather_rows(predictions, pred_rows),
                             nk::gather_rows(seqs, target_rows), metric);
}

std::vector<std::size_t> mae_mask_positions(std::size_t T, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(T) - 1e-12));
  if (k == 0 || T == 0) throw ContractError("mask selects no positions");
  std::vector<std::size_t> all(T);
  for (std::size_t i = 0; i < T; ++i) all[i] = i + 1;
  rng.shuffle(all);
  all.resize(std::min(k, T));
  std::sort(all.begin(), all.end());
  return all;
}

// -- model ------------------------------------------------------------------------------

namespace {

Tensor gaussian(Shape shape, double sd, Rng& rng) {
  Vector v(static_cast<Index>(nk::shape_numel(shape)));
  for (Index i = 0; i < v.size(); ++i) v[i] = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor swiglu(const Tensor& x, const Tensor& gate, const Tensor& up, const Tensor& down) {
  return nk::matmul(nk::mul(nk::silu(nk::matmul(x, gate)), nk::matmul(x, up)), down);
}

}  // namespace

EteModel::EteModel(const EteConfig& config, Rng& rng, Objective objective)
    : config_(config), objective_(objective) {
  config_.validate();
  const std::size_t d = config_.hidden, C = config_.token_width, I = config_.intermediate;
  const double sd = 0.02;
  const double out_sd = sd / std::sqrt(2.0 * static_cast<double>(config_.layers));
  // Unit-variance tokens land on the embedding scale after projection.
  in_proj = gaussian({C, d}, sd / std::sqrt(static_cast<double>(C)), rng);
  pos = gaussian({config_.max_len, d}, 0.1, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Block b;
    b.norm1 = Tensor::full({d}, 1.0, true);
    b.wq = gaussian({d, d}, sd, rng);
    b.wk = gaussian({d, d}, sd, rng);
    b.wv = gaussian({d, d}, sd, rng);
    b.wo = gaussian({d, d}, out_sd, rng);
    b.norm2 = Tensor::full({d}, 1.0, true);
    b.ffn_gate = gaussian({d, I}, sd, rng);
    b.ffn_up = gaussian({d, I}, sd, rng);
    b.ffn_down = gaussian({I, d}, out_sd, rng);
    blocks.push_back(std::move(b));
  }
  norm_f = Tensor::full({d}, 1.0, true);
  head_gate = gaussian({d, d}, sd, rng);
  head_up = gaussian({d, d}, sd, rng);
  head_down = gaussian({d, C}, sd, rng);
  if (objective_ == Objective::kMasked) mask_token = gaussian({1, C}, sd, rng);
}

std::vector<NamedTensor> EteModel::named_parameters() const {
  std::vector<NamedTensor> out{{"ete.in_proj", in_proj}, {"ete.pos", pos}};
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto p = "ete.block" + std::to_string(l) + ".";
    const auto& b = blocks[l];
    out.push_back({p + "norm1", b.norm1});
    out.push_back({p + "wq", b.wq});
    out.push_back({p + "wk", b.wk});
    out.push_back({p + "wv", b.wv});
    out.push_back({p + "wo", b.wo});
    out.push_back({p + "norm2", b.norm2});
    out.push_back({p + "ffn_gate", b.ffn_gate});
    out.push_back({p + "ffn_up", b.ffn_up});
    out.push_back({p + "ffn_down", b.ffn_down});
  }
  out.push_back({"ete.norm_f", norm_f});
  out.push_back({"ete.head_gate", head_gate});
  out.push_back({"ete.head_up", head_up});
  out.push_back({"ete.head_down", head_down});
  if (mask_token) out.push_back({"ete.mask_token", *mask_token});
  return out;
}

std::size_t EteModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.size();
  return n;
}

void EteModel::set_trainable(bool on) {
  for (auto& p : named_parameters()) {
    Tensor t = p.tensor;
    t.set_requires_grad(on);
    if (!on) t.zero_grad();
  }
}

Tensor EteModel::attention(const Tensor& xn, const Block& b, std::size_t batch,
                           std::size_t seq_len, const std::optional<Tensor>& mask) const {
  const std::size_t hs = config_.head_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hs));
  const Tensor q = nk::matmul(xn, b.wq);
  const Tensor k = nk::matmul(xn, b.wk);
  const Tensor v = nk::matmul(xn, b.wv);
  std::vector<Tensor> per_seq;
  per_seq.reserve(batch);
  std::vector<Tensor> heads(config_.heads);
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t r0 = s * seq_len;
    for (std::size_t h = 0; h < config_.heads; ++h) {
      const Tensor qh = nk::block(q, r0, seq_len, h * hs, hs);
      const Tensor kh = nk::block(k, r0, seq_len, h * hs, hs);
      const Tensor vh = nk::block(v, r0, seq_len, h * hs, hs);
      const Tensor p = nk::softmax_lastdim(nk::affine(nk::matmul_nt(qh, kh), scale), mask);
      heads[h] = nk::matmul(p, vh);
    }
    per_seq.push_back(config_.heads == 1 ? heads[0] : nk::concat_cols(heads));
  }
  const Tensor att = batch == 1 ? per_seq[0] : nk::concat_rows(per_seq);
  return nk::matmul(att, b.wo);
}

EteModel::Output EteModel::forward(const Tensor& seqs, std::size_t seq_len) const {
  Tensor x = encode(seqs, seq_len);
  Tensor pred = swiglu(nk::rms_norm(x, norm_f), head_gate, head_up, head_down);
  return {x, pred};
}

Tensor EteModel::encode(const Tensor& seqs, std::size_t seq_len) const {
  if (seqs.rank() != 2 || seqs.cols() != config_.token_width) {
    throw DimensionError("ete.forward expects [B S x " + std::to_string(config_.token_width) +
                         "], got " + nk::shape_str(seqs.shape()));
  }
  if (seq_len == 0 || seq_len > config_.max_len) {
    throw LengthError("sequence length " + std::to_string(seq_len) + " exceeds max_len " +
                      std::to_string(config_.max_len));
  }
  if (seqs.rows() % seq_len != 0) {
    throw LengthError(std::to_string(seqs.rows()) + " rows do not split into sequences of " +
                      std::to_string(seq_len));
  }
  const std::size_t batch = seqs.rows() / seq_len;
  std::vector<std::size_t> pos_rows(seqs.rows());
  for (std::size_t i = 0; i < pos_rows.size(); ++i) pos_rows[i] = i % seq_len;

  std::optional<Tensor> mask;
  if (!bidirectional()) mask = causal_mask(seq_len);

  Tensor x = nk::add(nk::matmul(seqs, in_proj), nk::gather_rows(pos, pos_rows));
  for (const auto& b : blocks) {
    x = nk::add(x, attention(nk::rms_norm(x, b.norm1), b, batch, seq_len, mask));
    x = nk::add(x, swiglu(nk::rms_norm(x, b.norm2), b.ffn_gate, b.ffn_up, b.ffn_down));
  }
  return x;
}

Tensor EteModel::ar_loss(const Tensor& seqs, std::size_t seq_len, Metric metric) const {
  if (seq_len < 2) throw ContractError("ar_loss needs at least one signal token (T = 0)");
  return ar_loss_from_predictions(seqs, forward(seqs, seq_len).predictions, seq_len, metric);
}

Tensor EteModel::mae_loss_at(const Tensor& seqs, std::size_t seq_len,
                             std::span<const std::size_t> masked_rows, Metric metric) const {
  if (!mask_token) throw ContractError("mae loss needs a model built for the masked objective");
  if (masked_rows.empty()) throw ContractError("mask selects no positions");
  const std::vector<std::size_t> zeros(masked_rows.size(), 0);
  const Tensor masked_input =
      nk::index_put_rows(seqs, masked_rows, nk::gather_rows(*mask_token, zeros));
  const Output out = forward(masked_input, seq_len);
  return reconstruction_loss(nk::gather_rows(out.predictions, masked_rows),
                             nk::gather_rows(seqs, masked_rows), metric);
}

Tensor EteModel::mae_forward_loss(const Tensor& seqs, std::size_t seq_len, double mask_ratio,
                                  Rng& rng, Metric metric, std::vector<std::size_t>* masked) const {
  if (seq_len < 2) throw ContractError("mae loss needs at least one signal token");
  if (seqs.rows() % seq_len != 0) throw LengthError("rows do not split into sequences");
  const std::size_t B = seqs.rows() / seq_len, T = seq_len - 1;
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < B; ++b) {
    for (auto t : mae_mask_positions(T, mask_ratio, rng)) rows.push_back(b * seq_len + t);
  }
  if (masked) *masked = rows;
  return mae_loss_at(seqs, seq_len, rows, metric);
}

// -- checkpoints ------------------------------------------------------------------------

nlohmann::json checkpoint_config(const EteModel& model) {
  return {{"kind", "ete"},
          {"objective", objective_name(model.objective())},
          {"ete", to_json(model.config())},
          {"electrode_list_version", kElectrodeListVersion}};
}

void save(const std::filesystem::path& dir, const EteModel& model,
          const tok::ElectrodeVocabulary& vocab) {
  auto params = model.named_parameters();
  params.push_back(vocab.named_parameter());
  ckpt::save(dir, params, checkpoint_config(model));
}

LoadedEncoder load(const std::filesystem::path& dir) {
  const auto cfg = ckpt::read_config(dir);
  if (cfg.value("kind", "") != "ete") {
    throw DataError("checkpoint " + dir.string() + " is not an encoder checkpoint");
  }
  if (cfg.value("electrode_list_version", 0) != kElectrodeListVersion) {
    throw VersionError("checkpoint electrode list version differs from this build");
  }
  Rng scratch(0);
  EteModel model(ete_config_from_json(cfg.at("ete")),
                 scratch, parse_objective(cfg.at("objective").get<std::string>()));
  tok::ElectrodeVocabulary vocab(model.config().token_width, scratch);
  auto params = model.named_parameters();
  params.push_back(vocab.named_parameter());
  ckpt::load_into(dir, params, true);
  return {std::move(model), std::move(vocab)};
}

}  // namespace eegpt::ete
