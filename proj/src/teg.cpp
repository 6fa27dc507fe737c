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

#include "eegpt/teg.hpp"

#include <cmath>
#include <set>

#include "eegpt/checkpoint.hpp"
#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::teg {

using nk::Shape;
using nk::Vector;
using Index = Eigen::Index;

void SubgraphActivation::validate() const {
  if (active_ids.empty()) throw ContractError("empty subgraph activation");
  std::set<std::size_t> seen;
  for (auto id : active_ids) {
    if (id >= kNumElectrodes) {
      throw ContractError("activation id " + std::to_string(id) + " outside the graph");
    }
    if (!seen.insert(id).second) {
      throw ContractError("duplicate activation id " + std::to_string(id));
    }
  }
}

Tensor extract_electrode_repr(const ete::EteModel& encoder, const Tensor& assembled,
                              std::size_t seq_len) {
  if (seq_len == 0 || assembled.rows() % seq_len != 0) {
    throw DimensionError("assembled rows do not split into sequences of " + std::to_string(seq_len));
  }
  const Tensor hidden = encoder.encode(assembled, seq_len);
  const std::size_t E = assembled.rows() / seq_len;
  std::vector<std::size_t> last(E);
  for (std::size_t e = 0; e < E; ++e) last[e] = e * seq_len + seq_len - 1;
  return nk::gather_rows(hidden, last);
}

// -- model ------------------------------------------------------------------------------

namespace {

Tensor gaussian(Shape shape, double sd, Rng& rng) {
  Vector v(static_cast<Index>(nk::shape_numel(shape)));
  for (Index i = 0; i < v.size(); ++i) v[i] = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

TegModel::TegModel(const TegConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.hidden, I = config_.intermediate, hs = config_.head_size;
  nodes = gaussian({kNumElectrodes, d}, 0.02, rng);
  special_token = gaussian({config_.token_width}, 0.02, rng);
  for (std::size_t k = 0; k < config_.layers; ++k) {
    Layer l;
    l.norm1 = Tensor::full({d}, 1.0, true);
    l.w = gaussian({d, d}, glorot(d, hs), rng);
    l.a = gaussian({2 * hs, config_.heads}, glorot(2 * hs, 1), rng);
    l.norm2 = Tensor::full({d}, 1.0, true);
    l.ffn_in = gaussian({d, I}, glorot(d, I), rng);
    l.ffn_out = gaussian({I, d}, glorot(I, d) / std::sqrt(2.0 * config_.layers), rng);
    layers.push_back(std::move(l));
  }
  norm_f = Tensor::full({d}, 1.0, true);
}

void TegModel::register_task(const std::string& task_id, int num_classes, Rng& rng) {
  if (task_id.empty()) throw ConfigError("task id must be non-empty");
  if (num_classes < 2) throw ConfigError("task '" + task_id + "' needs at least two classes");
  if (has_task(task_id)) throw TaskError("task '" + task_id + "' registered twice");
  const std::size_t d = config_.hidden, K = static_cast<std::size_t>(num_classes);
  heads[task_id] = {num_classes, gaussian({d, K}, glorot(d, K), rng),
                    Tensor::zeros({1, K}, true)};
}

const TaskHead& TegModel::head(const std::string& task_id) const {
  auto it = heads.find(task_id);
  if (it == heads.end()) throw TaskError("unregistered task '" + task_id + "'");
  return it->second;
}

std::vector<std::pair<std::string, int>> TegModel::tasks() const {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& [id, h] : heads) out.emplace_back(id, h.num_classes);
  return out;
}

std::vector<NamedTensor> TegModel::named_parameters() const {
  std::vector<NamedTensor> out{{"teg.nodes", nodes}, {"teg.special_token", special_token}};
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto p = "teg.layer" + std::to_string(k) + ".";
    const auto& l = layers[k];
    out.push_back({p + "norm1", l.norm1});
    out.push_back({p + "w", l.w});
    out.push_back({p + "a", l.a});
    out.push_back({p + "norm2", l.norm2});
    out.push_back({p + "ffn_in", l.ffn_in});
    out.push_back({p + "ffn_out", l.ffn_out});
  }
  out.push_back({"teg.norm_f", norm_f});
  for (const auto& [id, h] : heads) {
    out.push_back({"teg.head." + id + ".weight", h.weight});
    out.push_back({"teg.head." + id + ".bias", h.bias});
  }
  return out;
}

void TegModel::set_trainable(bool on) {
  for (auto& p : named_parameters()) {
    Tensor t = p.tensor;
    t.set_requires_grad(on);
    if (!on) t.zero_grad();
  }
}

Tensor TegModel::activate(const Tensor& z, const SubgraphActivation& act) const {
  act.validate();
  if (z.rank() != 2 || z.rows() != act.active_ids.size() || z.cols() != config_.hidden) {
    throw ContractError("activate: z " + nk::shape_str(z.shape()) + " for " +
                        std::to_string(act.active_ids.size()) + " active ids");
  }
  return nk::index_add_rows(nodes, act.active_ids, z);
}

Tensor TegModel::attention_weights(const Tensor& x, std::size_t layer, std::size_t h,
                                   const std::optional<Tensor>& mask) const {
  const auto& l = layers.at(layer);
  const std::size_t hs = config_.head_size;
  const Tensor wh = nk::cols(nk::matmul(nk::rms_norm(x, l.norm1), l.w), h * hs, hs);
  const Tensor a1 = nk::block(l.a, 0, hs, h, 1);
  const Tensor a2 = nk::block(l.a, hs, hs, h, 1);
  const Tensor e = nk::leaky_relu(nk::outer_sum(nk::matmul(wh, a1), nk::matmul(wh, a2)),
                                  config_.leaky_slope);
  return nk::softmax_lastdim(e, mask);
}

Tensor TegModel::layer_rows(const Tensor& x, std::size_t layer,
                            const std::optional<Tensor>& mask) const {
  const auto& l = layers.at(layer);
  const std::size_t hs = config_.head_size;
  const Tensor wh = nk::matmul(nk::rms_norm(x, l.norm1), l.w);
  std::vector<Tensor> outs(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor wh_h = nk::cols(wh, h * hs, hs);
    const Tensor a1 = nk::block(l.a, 0, hs, h, 1);
    const Tensor a2 = nk::block(l.a, hs, hs, h, 1);
    const Tensor e = nk::leaky_relu(nk::outer_sum(nk::matmul(wh_h, a1), nk::matmul(wh_h, a2)),
                                    config_.leaky_slope);
    outs[h] = nk::relu(nk::matmul(nk::softmax_lastdim(e, mask), wh_h));
  }
  Tensor y = nk::add(x, config_.heads == 1 ? outs[0] : nk::concat_cols(outs));
  const Tensor f = nk::matmul(nk::relu(nk::matmul(nk::rms_norm(y, l.norm2), l.ffn_in)), l.ffn_out);
  return nk::add(y, f);
}

Tensor TegModel::graph_attention_layer(const Tensor& features, const SubgraphActivation& act,
                                       std::size_t layer) const {
  act.validate();
  if (features.rank() != 2 || features.rows() != kNumElectrodes ||
      features.cols() != config_.hidden) {
    throw DimensionError("graph layer expects [138 x d] features, got " +
                         nk::shape_str(features.shape()));
  }
  const Tensor x = nk::gather_rows(features, act.active_ids);
  return nk::index_put_rows(features, act.active_ids, layer_rows(x, layer, std::nullopt));
}

Tensor TegModel::pool_and_classify(const Tensor& features, const SubgraphActivation& act,
                                   const std::string& task_id) const {
  const auto& h = head(task_id);
  act.validate();
  const Tensor pooled =
      nk::mean_rows(nk::rms_norm(nk::gather_rows(features, act.active_ids), norm_f));
  return nk::add(nk::matmul(pooled, h.weight), h.bias);
}

Tensor TegModel::forward_solo(const Tensor& z, const SubgraphActivation& act,
                              const std::string& task_id) const {
  head(task_id);
  Tensor f = activate(z, act);
  for (std::size_t k = 0; k < layers.size(); ++k) f = graph_attention_layer(f, act, k);
  return pool_and_classify(f, act, task_id);
}

std::vector<Tensor> TegModel::batch_forward(std::span<const TegInput> batch) const {
  if (batch.empty()) return {};
  std::vector<Tensor> stacked;
  std::vector<std::size_t> offsets;
  std::size_t n = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& in = batch[i];
    try {
      head(in.task_id);
      in.activation.validate();
      if (in.z.rank() != 2 || in.z.rows() != in.activation.active_ids.size() ||
          in.z.cols() != config_.hidden) {
        throw ContractError("z " + nk::shape_str(in.z.shape()) + " for " +
                            std::to_string(in.activation.active_ids.size()) + " active ids");
      }
    } catch (const TaskError& e) {
      throw TaskError("batch sample " + std::to_string(i) + ": " + e.what());
    } catch (const ContractError& e) {
      throw ContractError("batch sample " + std::to_string(i) + ": " + e.what());
    }
    stacked.push_back(nk::add(nk::gather_rows(nodes, in.activation.active_ids), in.z));
    offsets.push_back(n);
    n += in.activation.active_ids.size();
  }
  offsets.push_back(n);

  // beta as an additive mask: 0 inside each sample's block, sentinel across.
  std::optional<Tensor> mask;
  if (batch.size() > 1) {
    Vector m = Vector::Constant(static_cast<Index>(n * n), nk::kMaskSentinel);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) {
        for (std::size_t c = offsets[i]; c < offsets[i + 1]; ++c) {
          m[static_cast<Index>(r * n + c)] = 0.0;
        }
      }
    }
    mask = Tensor({n, n}, std::move(m));
  }

  Tensor x = batch.size() == 1 ? stacked[0] : nk::concat_rows(stacked);
  for (std::size_t k = 0; k < layers.size(); ++k) x = layer_rows(x, k, mask);
  const Tensor xn = nk::rms_norm(x, norm_f);

  std::vector<Tensor> logits;
  logits.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& h = head(batch[i].task_id);
    const Tensor pooled = nk::mean_rows(nk::rows(xn, offsets[i], offsets[i + 1] - offsets[i]));
    logits.push_back(nk::add(nk::matmul(pooled, h.weight), h.bias));
  }
  return logits;
}

Tensor classification_loss(std::span<const Tensor> logits, std::span<const int> labels) {
  if (logits.size() != labels.size() || logits.empty()) {
    throw ContractError("classification_loss: " + std::to_string(logits.size()) + " logit rows for " +
                        std::to_string(labels.size()) + " labels");
  }
  std::vector<Tensor> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    terms.push_back(nk::reshape(nk::cross_entropy(logits[i], labels.subspan(i, 1)), {1, 1}));
  }
  return nk::mean(terms.size() == 1 ? terms[0] : nk::concat_rows(terms));
}

// -- checkpoints ------------------------------------------------------------------------

void save(const std::filesystem::path& dir, const TegModel& model) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, k] : model.tasks()) tasks.push_back({{"id", id}, {"num_classes", k}});
  const nlohmann::json cfg = {{"kind", "teg"},
                              {"teg", to_json(model.config())},
                              {"tasks", tasks},
                              {"electrode_list_version", kElectrodeListVersion}};
  ckpt::save(dir, model.named_parameters(), cfg);
}

TegModel load(const std::filesystem::path& dir) {
  const auto cfg = ckpt::read_config(dir);
  if (cfg.value("kind", "") != "teg") {
    throw DataError("checkpoint " + dir.string() + " is not a graph checkpoint");
  }
  if (cfg.value("electrode_list_version", 0) != kElectrodeListVersion) {
    throw VersionError("checkpoint electrode list version differs from this build");
  }
  Rng scratch(0);
  TegModel model(teg_config_from_json(cfg.at("teg")), scratch);
  for (const auto& t : cfg.at("tasks")) {
    model.register_task(t.at("id").get<std::string>(), t.at("num_classes").get<int>(), scratch);
  }
  ckpt::load_into(dir, model.named_parameters(), true);
  return model;
}

}  // namespace eegpt::teg
