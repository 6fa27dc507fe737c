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

#include "eegpt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "eegpt/checkpoint.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::train {

namespace fs = std::filesystem;
using Index = Eigen::Index;
using nk::Matrix;
using nk::Vector;

// -- optimiser ------------------------------------------------------------------------------

AdamW::AdamW(std::vector<NamedTensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr >= 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.eps > 0.0) ||
      !(config_.weight_decay >= 0.0)) {
    throw ConfigError("invalid AdamW hyperparameters");
  }
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf()) throw ContractError("optimiser parameter " + p.name + " is not a leaf");
    m_.push_back(Vector::Zero(static_cast<Index>(p.tensor.size())));
    v_.push_back(Vector::Zero(static_cast<Index>(p.tensor.size())));
  }
}

void AdamW::step(double lr) {
  std::vector<Vector> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    grads.push_back(p.tensor.grad());
    if (!grads.back().allFinite()) {
      throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Vector& g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    Vector& p = params_[i].tensor.mutable_values();
    for (Index k = 0; k < p.size(); ++k) {
      const double mhat = m_[i][k] / c1;
      const double vhat = v_[i][k] / c2;
      p[k] = p[k] - lr * config_.weight_decay * p[k] - lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    if (!p.allFinite()) throw NumericError("parameter " + params_[i].name + " left the finite range");
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

std::vector<NamedTensor> AdamW::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"opt.m." + params_[i].name, Tensor(params_[i].tensor.shape(), m_[i])});
    out.push_back({"opt.v." + params_[i].name, Tensor(params_[i].tensor.shape(), v_[i])});
  }
  return out;
}

void AdamW::load_state(const std::vector<NamedTensor>& state, std::size_t step) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : state) by_name[s.name] = &s.tensor;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto m = by_name.find("opt.m." + params_[i].name);
    const auto v = by_name.find("opt.v." + params_[i].name);
    if (m == by_name.end() || v == by_name.end()) {
      throw DataError("optimiser state lacks moments for " + params_[i].name);
    }
    if (m->second->size() != params_[i].tensor.size() ||
        v->second->size() != params_[i].tensor.size()) {
      throw DataError("optimiser state for " + params_[i].name + " has the wrong size");
    }
    m_[i] = m->second->values();
    v_[i] = v->second->values();
  }
  step_ = step;
}

std::size_t Schedule::warmup_steps() const {
  return static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double Schedule::lr(std::size_t step) const {
  const std::size_t w = warmup_steps();
  if (step <= w) return w == 0 ? base_lr : base_lr * static_cast<double>(step) / static_cast<double>(w);
  if (step >= total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - w) / static_cast<double>(total_steps - w);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// -- metrics ------------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string value_json(const MetricValue& v) {
  if (const auto* d = std::get_if<double>(&v)) {
    return std::isfinite(*d) ? format_double(*d) : "null";
  }
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return nlohmann::json(std::get<std::string>(v)).dump();
}

std::string value_csv(const MetricValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

// Records travel through checkpoint configs as [key, value] pairs so that
// field order survives the round trip.
nlohmann::json record_to_json(const MetricRecord& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [k, v] : r) {
    std::visit([&](const auto& x) { out.push_back(nlohmann::json::array({k, x})); }, v);
  }
  return out;
}

MetricRecord record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  for (const auto& kv : j) {
    const auto k = kv.at(0).get<std::string>();
    const auto& v = kv.at(1);
    if (v.is_number_integer()) {
      r.emplace_back(k, v.get<std::int64_t>());
    } else if (v.is_number()) {
      r.emplace_back(k, v.get<double>());
    } else {
      r.emplace_back(k, v.get<std::string>());
    }
  }
  return r;
}

}  // namespace

MetricsLog::MetricsLog(const fs::path& dir, std::vector<std::string> columns)
    : dir_(dir), columns_(std::move(columns)) {
  fs::create_directories(dir_);
  std::ofstream(dir_ / "metrics.jsonl", std::ios::trunc);
  std::ofstream csv(dir_ / "metrics.csv", std::ios::trunc);
  for (std::size_t i = 0; i < columns_.size(); ++i) csv << (i ? "," : "") << columns_[i];
  csv << "\n";
}

void MetricsLog::append(const MetricRecord& record) {
  records_.push_back(record);
  if (dir_.empty()) return;
  std::ofstream jl(dir_ / "metrics.jsonl", std::ios::app);
  jl << "{";
  for (std::size_t i = 0; i < record.size(); ++i) {
    jl << (i ? "," : "") << nlohmann::json(record[i].first).dump() << ":"
       << value_json(record[i].second);
  }
  jl << "}\n";
  std::ofstream csv(dir_ / "metrics.csv", std::ios::app);
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (c) csv << ",";
    for (const auto& [k, v] : record) {
      if (k == columns_[c]) {
        csv << value_csv(v);
        break;
      }
    }
  }
  csv << "\n";
}

// -- pretraining ----------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kBatchStream = 0x4241544348000000ULL;
constexpr std::uint64_t kMaskStream = 0x4D41534B00000000ULL;
constexpr std::uint64_t kHeldoutStream = 0x484F4C44ULL;

/// Epoch-keyed permutations, so that the k-th item of the training stream is
/// a pure function of (seed, k) and a resumed run replays the same batches.
class ItemStream {
 public:
  ItemStream(std::size_t n, std::uint64_t seed, std::uint64_t stream)
      : n_(n), seed_(seed), stream_(stream) {}

  std::size_t at(std::size_t k) {
    const std::size_t epoch = k / n_;
    if (epoch != epoch_ || perm_.empty()) {
      perm_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
      Rng rng(seed_, stream_ + epoch);
      rng.shuffle(perm_);
      epoch_ = epoch;
    }
    return perm_[k % n_];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_, stream_;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> perm_;
};

Tensor objective_loss(const ete::EteModel& model, const Tensor& batch, std::size_t seq_len,
                      ete::Metric metric, double mask_ratio, Rng& mask_rng) {
  if (model.objective() == ete::Objective::kAutoregressive) {
    return model.ar_loss(batch, seq_len, metric);
  }
  return model.mae_forward_loss(batch, seq_len, mask_ratio, mask_rng, metric);
}

std::vector<NamedTensor> pretrain_parameters(const ete::EteModel& model,
                                             const tok::ElectrodeVocabulary& vocab) {
  auto params = model.named_parameters();
  params.push_back(vocab.named_parameter());
  return params;
}

void write_state(const fs::path& dir, const std::vector<NamedTensor>& params, const AdamW& opt,
                 nlohmann::json config) {
  auto tensors = params;
  for (auto& s : opt.state()) tensors.push_back(std::move(s));
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  ckpt::save(tmp, tensors, config);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

}  // namespace

double heldout_loss(const ete::EteModel& model, const tok::ElectrodeVocabulary& vocab,
                    const tok::GroupedCorpus& corpus, ete::Metric metric, double mask_ratio,
                    std::size_t max_sequences, std::uint64_t seed) {
  const auto items = corpus.flatten();
  if (items.empty()) throw DataError("held-out corpus is empty");
  std::vector<std::size_t> pick;
  const std::size_t n = items.size();
  const std::size_t m = (max_sequences == 0 || max_sequences >= n) ? n : max_sequences;
  for (std::size_t i = 0; i < m; ++i) pick.push_back(i * n / m);

  const std::size_t S = static_cast<std::size_t>(items.front().second->tokens.rows()) + 1;
  Rng mask_rng(seed, kHeldoutStream);
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t b = 0; b < pick.size(); b += kChunk) {
    const std::size_t cnt = std::min(kChunk, pick.size() - b);
    std::vector<std::size_t> ids(cnt);
    std::vector<const Matrix*> blocks(cnt);
    for (std::size_t i = 0; i < cnt; ++i) {
      ids[i] = items[pick[b + i]].first;
      blocks[i] = &items[pick[b + i]].second->tokens;
    }
    const Tensor batch = tok::assemble_pretrain_batch(ids, blocks, vocab);
    total += static_cast<double>(cnt) *
             objective_loss(model, batch.detach(), S, metric, mask_ratio, mask_rng).item();
  }
  return total / static_cast<double>(pick.size());
}

PretrainResult pretrain(ete::EteModel& model, tok::ElectrodeVocabulary& vocab,
                        const tok::GroupedCorpus& train, const tok::GroupedCorpus& heldout,
                        const PretrainConfig& config, const std::optional<fs::path>& run_dir,
                        const std::optional<fs::path>& resume_from) {
  if (config.steps == 0 || config.batch_size == 0) {
    throw ConfigError("pretraining needs steps > 0 and batch_size > 0");
  }
  const auto items = train.flatten();
  if (items.empty()) throw DataError("training corpus is empty");
  const std::size_t T = static_cast<std::size_t>(items.front().second->tokens.rows());
  const std::size_t S = T + 1;
  for (const auto& [id, blk] : items) {
    if (static_cast<std::size_t>(blk->tokens.rows()) != T) {
      throw DataError("training blocks have different token counts");
    }
  }

  model.set_trainable(true);
  {
    Tensor e = vocab.embeddings();
    e.set_requires_grad(true);
  }
  const auto params = pretrain_parameters(model, vocab);
  AdamW opt(params, config.optimizer);
  const Schedule schedule{config.optimizer.lr, config.warmup_ratio, config.steps};

  PretrainResult result;
  std::size_t start = 0;
  std::vector<MetricRecord> prior;
  if (resume_from) {
    const auto cfg = ckpt::read_config(*resume_from);
    if (cfg.value("kind", "") != "pretrain_state") {
      throw DataError("checkpoint " + resume_from->string() + " is not a pretraining state");
    }
    ckpt::load_into(*resume_from, params);
    opt.load_state(ckpt::load_all(*resume_from), cfg.at("step").get<std::size_t>());
    start = opt.step_count();
    result.initial_heldout = cfg.at("initial_heldout").get<double>();
    for (const auto& r : cfg.at("metrics")) prior.push_back(record_from_json(r));
    if (start > config.steps) throw ConfigError("resume step exceeds the configured steps");
  }

  MetricsLog log;
  if (run_dir) {
    log = MetricsLog(*run_dir, {"step", "lr", "loss", "heldout_loss", "tokens"});
  }
  for (const auto& r : prior) log.append(r);

  auto eval = [&] {
    return heldout_loss(model, vocab, heldout, config.metric, config.mask_ratio,
                        config.eval_sequences, config.seed);
  };
  if (!resume_from) {
    result.initial_heldout = eval();
    log.append({{"step", std::int64_t{0}}, {"heldout_loss", result.initial_heldout}});
  }

  auto save_state = [&](std::size_t step) {
    if (!run_dir) return;
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : log.records()) records.push_back(record_to_json(r));
    nlohmann::json cfg = {{"kind", "pretrain_state"},
                          {"step", step},
                          {"initial_heldout", result.initial_heldout},
                          {"model", ete::checkpoint_config(model)},
                          {"metrics", records}};
    char name[32];
    std::snprintf(name, sizeof name, "step_%08zu", step);
    write_state(*run_dir / "state" / name, params, opt, cfg);
    ete::save(*run_dir / "checkpoint", model, vocab);
  };

  ItemStream stream(items.size(), config.seed, kBatchStream);
  std::vector<std::size_t> ids(config.batch_size);
  std::vector<const Matrix*> blocks(config.batch_size);
  double heldout_now = result.initial_heldout;
  for (std::size_t step = start + 1; step <= config.steps; ++step) {
    for (std::size_t i = 0; i < config.batch_size; ++i) {
      const auto& item = items[stream.at((step - 1) * config.batch_size + i)];
      ids[i] = item.first;
      blocks[i] = &item.second->tokens;
    }
    const double lr = schedule.lr(step);
    double loss_value = 0.0;
    try {
      const Tensor batch = tok::assemble_pretrain_batch(ids, blocks, vocab);
      Rng mask_rng(config.seed, kMaskStream ^ step);
      const Tensor loss =
          objective_loss(model, batch, S, config.metric, config.mask_ratio, mask_rng);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
      nk::backward(loss);
      opt.step(lr);
      opt.zero_grad();
    } catch (const NumericError& e) {
      throw DivergenceError("pretraining diverged at step " + std::to_string(step) + ": " +
                            e.what());
    }
    MetricRecord rec = {{"step", static_cast<std::int64_t>(step)},
                        {"lr", lr},
                        {"loss", loss_value},
                        {"tokens", static_cast<std::int64_t>(step * config.batch_size * T)}};
    const bool last = step == config.steps;
    if (last || (config.eval_every && step % config.eval_every == 0)) {
      heldout_now = eval();
      rec.insert(rec.begin() + 3, {"heldout_loss", heldout_now});
    }
    log.append(rec);
    if (last || (config.checkpoint_every && step % config.checkpoint_every == 0)) {
      save_state(step);
    }
  }
  if (start == config.steps) heldout_now = eval();

  result.final_heldout = heldout_now;
  result.steps = config.steps;
  result.tokens_seen = config.steps * config.batch_size * T;
  result.metrics = log.records();
  return result;
}

// -- fine-tuning ---------------------------------------------------------------------------

FinetuneMode parse_mode(const std::string& s) {
  if (s == "joint") return FinetuneMode::kJoint;
  if (s == "separate") return FinetuneMode::kSeparate;
  throw ConfigError("unknown fine-tuning mode '" + s + "' (expected joint or separate)");
}

std::string mode_name(FinetuneMode m) { return m == FinetuneMode::kJoint ? "joint" : "separate"; }

TaskData make_task(const data::Dataset& ds, std::uint64_t split_seed) {
  TaskData t;
  t.task_id = ds.task_id.value_or(ds.name);
  if (!ds.num_classes || *ds.num_classes < 2) {
    throw DataError("dataset " + ds.name + " carries no class count");
  }
  t.num_classes = *ds.num_classes;
  for (const auto& s : ds.samples) {
    if (!s.label || *s.label < 0 || *s.label >= t.num_classes) {
      throw DataError("dataset " + ds.name + " has a missing or out-of-range label");
    }
  }
  const auto split = data::split_dataset(ds, split_seed);
  t.train = data::subset(ds, split.train);
  t.val = data::subset(ds, split.val);
  t.test = data::subset(ds, split.test);
  for (const auto* part : {&t.train, &t.val, &t.test}) {
    if (part->samples.empty()) throw DataError("task " + t.task_id + " has an empty split");
  }
  return t;
}

namespace {

constexpr std::uint64_t kGraphInitStream = 0x544547ULL;
constexpr std::uint64_t kFinetuneStream = 0x46540000ULL;

void require_frozen(const ete::EteModel& encoder, const tok::ElectrodeVocabulary& vocab) {
  for (const auto& p : encoder.named_parameters()) {
    if (p.tensor.requires_grad()) throw ContractError("encoder parameter " + p.name + " is not frozen");
  }
  if (vocab.embeddings().requires_grad()) throw ContractError("electrode vocabulary is not frozen");
}

/// Encoder representations of several samples in one encoder pass.
std::vector<Tensor> batch_repr(const ete::EteModel& encoder, const Tensor& special_token,
                               std::span<const data::EegSample* const> samples) {
  std::vector<Tensor> parts;
  parts.reserve(samples.size());
  for (const auto* s : samples) parts.push_back(tok::assemble_finetune(*s, special_token));
  const std::size_t S = samples.front()->num_tokens + 1;
  const Tensor z_all = teg::extract_electrode_repr(encoder, nk::concat_rows(parts), S);
  std::vector<Tensor> z;
  std::size_t row = 0;
  for (const auto* s : samples) {
    z.push_back(nk::rows(z_all, row, s->num_electrodes()));
    row += s->num_electrodes();
  }
  return z;
}

struct PoolItem {
  std::size_t task;
  std::size_t sample;
};

/// Data-dependent start for the node table: each electrode's base row becomes
/// minus its mean representation over `pool`, so activated rows start centred.
/// Without it the sample-to-sample spread is a fraction of a percent of the
/// row and the graph's per-row norm hides it.
void center_nodes(const ete::EteModel& encoder, teg::TegModel& graph,
                  const std::vector<TaskData>& tasks, std::span<const PoolItem> pool) {
  const std::size_t d = graph.config().hidden;
  std::map<std::size_t, std::pair<nk::Vector, std::size_t>> acc;
  const Tensor c = graph.special_token.detach();
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < pool.size(); b += kChunk) {
    std::vector<const data::EegSample*> samples;
    for (std::size_t i = b; i < std::min(pool.size(), b + kChunk); ++i) {
      samples.push_back(&tasks[pool[i].task].train.samples[pool[i].sample]);
    }
    const auto z = batch_repr(encoder, c, samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto zm = z[i].matrix();
      for (std::size_t e = 0; e < samples[i]->num_electrodes(); ++e) {
        auto& [sum, n] = acc[samples[i]->electrodes[e]];
        if (n == 0) sum = nk::Vector::Zero(static_cast<Eigen::Index>(d));
        sum += zm.row(static_cast<Eigen::Index>(e)).transpose();
        ++n;
      }
    }
  }
  auto& v = graph.nodes.mutable_values();
  for (const auto& [id, sn] : acc) {
    v.segment(static_cast<Eigen::Index>(id * d), static_cast<Eigen::Index>(d)) =
        -sn.first / static_cast<double>(sn.second);
  }
}

struct GraphRun {
  std::vector<std::size_t> steps_per_task, visits_per_task;
  std::size_t steps = 0;
};

GraphRun train_graph(const ete::EteModel& encoder, teg::TegModel& graph,
                     const std::vector<TaskData>& tasks, const std::vector<PoolItem>& pool,
                     const FinetuneConfig& config, const std::string& graph_name,
                     MetricsLog& log) {
  graph.set_trainable(true);
  AdamW opt(graph.named_parameters(), config.optimizer);
  const std::size_t visits = config.epochs * pool.size();
  const std::size_t steps = (visits + config.batch_size - 1) / config.batch_size;
  const Schedule schedule{config.optimizer.lr, config.warmup_ratio, steps};
  ItemStream stream(pool.size(), config.seed, kFinetuneStream);

  GraphRun run;
  run.steps = steps;
  run.steps_per_task.assign(tasks.size(), 0);
  run.visits_per_task.assign(tasks.size(), 0);
  for (std::size_t step = 1; step <= steps; ++step) {
    const std::size_t begin = (step - 1) * config.batch_size;
    const std::size_t end = std::min(visits, begin + config.batch_size);
    std::vector<const data::EegSample*> samples;
    std::vector<std::size_t> task_of;
    std::vector<int> labels;
    std::set<std::size_t> touched;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& it = pool[stream.at(k)];
      const auto& s = tasks[it.task].train.samples[it.sample];
      samples.push_back(&s);
      task_of.push_back(it.task);
      labels.push_back(*s.label);
      touched.insert(it.task);
      ++run.visits_per_task[it.task];
    }
    for (const auto t : touched) ++run.steps_per_task[t];

    const double lr = schedule.lr(step);
    double loss_value = 0.0;
    try {
      const auto z = batch_repr(encoder, graph.special_token, samples);
      std::vector<teg::TegInput> inputs;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        inputs.push_back({z[i], {samples[i]->electrodes}, tasks[task_of[i]].task_id});
      }
      const auto logits = graph.batch_forward(inputs);
      const Tensor loss = teg::classification_loss(logits, labels);
      loss_value = loss.item();
      nk::backward(loss);
      opt.step(lr);
      opt.zero_grad();
    } catch (const NumericError& e) {
      throw DivergenceError("fine-tuning diverged at step " + std::to_string(step) + ": " +
                            e.what());
    }
    log.append({{"graph", graph_name},
                {"step", static_cast<std::int64_t>(step)},
                {"lr", lr},
                {"loss", loss_value}});
  }
  return run;
}

}  // namespace

FinetuneResult finetune(const ete::EteModel& encoder, const tok::ElectrodeVocabulary& vocab,
                        const std::vector<TaskData>& tasks, const TegConfig& teg_config,
                        FinetuneMode mode, const FinetuneConfig& config,
                        const std::optional<fs::path>& run_dir) {
  require_frozen(encoder, vocab);
  teg_config.validate();
  if (teg_config.hidden != encoder.config().hidden ||
      teg_config.token_width != encoder.config().token_width) {
    throw ConfigError("graph and encoder widths differ");
  }
  if (tasks.empty()) throw DataError("no fine-tuning tasks given");
  if (config.epochs == 0 || config.batch_size == 0) {
    throw ConfigError("fine-tuning needs epochs > 0 and batch_size > 0");
  }
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    if (!ids.insert(t.task_id).second) throw TaskError("duplicate task id " + t.task_id);
    for (const auto* part : {&t.train, &t.val, &t.test}) {
      if (part->samples.empty()) throw DataError("task " + t.task_id + " has an empty split");
      for (const auto& s : part->samples) {
        s.validate();
        if (!s.label || *s.label < 0 || *s.label >= t.num_classes) {
          throw DataError("task " + t.task_id + " has a missing or out-of-range label");
        }
      }
    }
  }
  const auto frozen_before = [&] {
    auto p = encoder.named_parameters();
    p.push_back(vocab.named_parameter());
    return ckpt::checksum(p);
  }();

  FinetuneResult result;
  result.mode = mode;
  MetricsLog log;
  if (run_dir) log = MetricsLog(*run_dir, {"graph", "step", "lr", "loss"});

  auto fresh_graph = [&](std::span<const TaskData* const> for_tasks) {
    Rng rng(config.seed, kGraphInitStream);
    auto g = std::make_shared<teg::TegModel>(teg_config, rng);
    for (const auto* t : for_tasks) g->register_task(t->task_id, t->num_classes, rng);
    return g;
  };

  result.tasks.resize(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) result.tasks[i].task_id = tasks[i].task_id;

  if (mode == FinetuneMode::kJoint) {
    std::vector<const TaskData*> all;
    std::vector<PoolItem> pool;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      all.push_back(&tasks[t]);
      for (std::size_t s = 0; s < tasks[t].train.samples.size(); ++s) pool.push_back({t, s});
    }
    auto g = fresh_graph(all);
    if (config.center_nodes) center_nodes(encoder, *g, tasks, pool);
    const auto run = train_graph(encoder, *g, tasks, pool, config, "joint", log);
    result.total_steps = run.steps;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      result.tasks[t].steps = run.steps_per_task[t];
      result.tasks[t].sample_visits = run.visits_per_task[t];
      result.models[tasks[t].task_id] = g;
    }
  } else {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const TaskData* one[] = {&tasks[t]};
      auto g = fresh_graph(one);
      std::vector<PoolItem> pool;
      for (std::size_t s = 0; s < tasks[t].train.samples.size(); ++s) pool.push_back({t, s});
      if (config.center_nodes) center_nodes(encoder, *g, tasks, pool);
      const auto run = train_graph(encoder, *g, tasks, pool, config, tasks[t].task_id, log);
      result.total_steps += run.steps;
      result.tasks[t].steps = run.steps_per_task[t];
      result.tasks[t].sample_visits = run.visits_per_task[t];
      result.models[tasks[t].task_id] = g;
    }
  }

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& g = *result.models.at(tasks[t].task_id);
    result.tasks[t].val_accuracy = evaluate(encoder, g, tasks[t].val, tasks[t].task_id).accuracy;
    result.tasks[t].test_accuracy = evaluate(encoder, g, tasks[t].test, tasks[t].task_id).accuracy;
  }

  auto p = encoder.named_parameters();
  p.push_back(vocab.named_parameter());
  if (ckpt::checksum(p) != frozen_before) {
    throw ContractError("frozen encoder parameters changed during fine-tuning");
  }

  if (run_dir) {
    if (mode == FinetuneMode::kJoint) {
      teg::save(*run_dir / "graph_joint", *result.models.begin()->second);
    } else {
      for (const auto& [id, g] : result.models) teg::save(*run_dir / ("graph_" + id), *g);
    }
  }
  result.metrics = log.records();
  return result;
}

// -- evaluation ------------------------------------------------------------------------------

EvalMetrics score_predictions(std::span<const int> predicted, std::span<const int> labels,
                              int num_classes) {
  if (predicted.size() != labels.size()) throw DimensionError("prediction and label counts differ");
  if (labels.empty()) throw DataError("cannot score an empty split");
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  EvalMetrics m;
  const auto K = static_cast<std::size_t>(num_classes);
  m.confusion.assign(K, std::vector<std::size_t>(K, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes) {
      throw DataError("class index out of range");
    }
    ++m.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predicted[i])];
    if (labels[i] == predicted[i]) ++m.correct;
  }
  m.total = labels.size();
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  return m;
}

std::vector<int> predict(const ete::EteModel& encoder, const teg::TegModel& graph,
                         const data::Dataset& ds, const std::string& task_id,
                         std::size_t batch_size) {
  if (ds.samples.empty()) throw DataError("cannot predict on an empty split");
  graph.head(task_id);
  const Tensor c = graph.special_token.detach();
  std::vector<int> out;
  for (std::size_t b = 0; b < ds.samples.size(); b += batch_size) {
    const std::size_t end = std::min(ds.samples.size(), b + batch_size);
    std::vector<const data::EegSample*> samples;
    for (std::size_t i = b; i < end; ++i) samples.push_back(&ds.samples[i]);
    const auto z = batch_repr(encoder, c, samples);
    std::vector<teg::TegInput> inputs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      inputs.push_back({z[i], {samples[i]->electrodes}, task_id});
    }
    for (const auto& l : graph.batch_forward(inputs)) {
      const auto row = l.values();
      Index arg = 0;
      row.maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

EvalMetrics evaluate(const ete::EteModel& encoder, const teg::TegModel& graph,
                     const data::Dataset& ds, const std::string& task_id) {
  if (ds.samples.empty()) throw DataError("cannot evaluate on an empty split");
  const auto pred = predict(encoder, graph, ds, task_id);
  std::vector<int> labels;
  for (const auto& s : ds.samples) {
    if (!s.label) throw DataError("evaluation sample without a label");
    labels.push_back(*s.label);
  }
  return score_predictions(pred, labels, graph.head(task_id).num_classes);
}

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of an empty list");
  MeanStd r;
  for (const double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

}  // namespace eegpt::train
