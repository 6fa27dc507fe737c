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

#include "eegpt/harness.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::harness {

namespace {

constexpr std::uint64_t kEncoderInitStream = 0x454E43ULL;
constexpr std::uint64_t kTaskSeedOffset = 0x5441534BULL;

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * x);
  return buf;
}

std::string pm(const train::MeanStd& s) { return pct(s.mean) + " +- " + pct(s.std); }

struct SplitCorpus {
  tok::GroupedCorpus train, heldout;
};

SplitCorpus split_corpus(const data::Dataset& corpus, std::uint64_t seed) {
  const auto sp = data::split_dataset(corpus, seed);
  return {tok::reorganize(data::subset(corpus, sp.train)),
          tok::reorganize(data::subset(corpus, sp.val))};
}

}  // namespace

data::SyntheticSpec pretrain_corpus_spec(std::uint64_t seed, std::size_t electrodes,
                                         std::size_t windows) {
  if (electrodes == 0 || electrodes > kNumElectrodes) {
    throw ConfigError("corpus electrode count must be in 1..138");
  }
  data::SyntheticSpec spec;
  spec.seed = seed;
  spec.name = "pretrain";
  for (std::size_t i = 0; i < electrodes; ++i) spec.electrodes.emplace_back(kElectrodeNames[i]);
  spec.samples_per_electrode = windows * spec.profile.window_samples();
  spec.burn_in = 500;
  return spec;
}

data::SyntheticSpec task_spec(std::uint64_t seed, const std::string& task_id,
                              std::vector<std::string> electrodes, std::size_t windows,
                              data::LabelRule rule, int num_classes, double band_gain) {
  data::SyntheticSpec spec;
  spec.seed = seed;
  spec.name = task_id;
  spec.task_id = task_id;
  spec.electrodes = std::move(electrodes);
  spec.samples_per_electrode = windows * spec.profile.window_samples();
  spec.burn_in = 500;
  spec.label_rule = rule;
  spec.num_classes = num_classes;
  spec.band_gain = band_gain;
  return spec;
}

train::PretrainConfig default_pretrain(std::size_t steps) {
  train::PretrainConfig pc;
  pc.steps = steps;
  pc.eval_every = 0;
  return pc;
}

train::FinetuneConfig default_finetune(std::size_t epochs) {
  train::FinetuneConfig fc;
  fc.epochs = epochs;
  fc.optimizer.lr = 3e-3;
  return fc;
}

PretrainedEncoder pretrain_encoder(const EteConfig& config, ete::Objective objective,
                                   const data::Dataset& corpus, const train::PretrainConfig& pc) {
  Rng rng(pc.seed, kEncoderInitStream);
  ete::EteModel model(config, rng, objective);
  tok::ElectrodeVocabulary vocab(config.token_width, rng);
  const auto split = split_corpus(corpus, pc.seed);
  train::PretrainResult run;
  if (pc.steps > 0) {
    run = train::pretrain(model, vocab, split.train, split.heldout, pc);
  } else {
    run.initial_heldout = run.final_heldout = train::heldout_loss(
        model, vocab, split.heldout, pc.metric, pc.mask_ratio, pc.eval_sequences, pc.seed);
  }
  model.set_trainable(false);
  nk::Tensor e = vocab.embeddings();
  e.set_requires_grad(false);
  return {std::move(model), std::move(vocab), std::move(run)};
}

// -- pretraining objective comparison -------------------------------------------------------

ObjectiveReport compare_objectives(const ObjectiveConfig& config) {
  const auto mc = preset(config.preset);
  ObjectiveReport report;
  report.seeds = config.seeds;
  const ete::Objective objectives[] = {ete::Objective::kAutoregressive, ete::Objective::kMasked};
  for (const auto metric : config.metrics) {
    for (const auto obj : objectives) report.rows.push_back({obj, metric, {}, {}, {}});
  }
  for (const auto seed : config.seeds) {
    const auto corpus = data::generate_synthetic(
        pretrain_corpus_spec(seed, config.corpus_electrodes, config.corpus_windows));
    const auto task_ds = data::generate_synthetic(
        task_spec(seed ^ kTaskSeedOffset, "order", config.task_electrodes, config.task_windows,
                  data::LabelRule::kBandArgmax, config.task_classes, config.band_gain));
    const std::vector<train::TaskData> tasks = {train::make_task(task_ds, seed)};
    for (auto& row : report.rows) {
      auto pc = config.pretrain;
      pc.seed = seed;
      pc.metric = row.metric;
      const auto enc = pretrain_encoder(mc.ete, row.objective, corpus, pc);
      auto fc = config.finetune;
      fc.seed = seed;
      const auto ft = train::finetune(enc.model, enc.vocab, tasks, mc.teg,
                                      train::FinetuneMode::kJoint, fc);
      row.accuracy.push_back(ft.tasks.front().test_accuracy);
      row.heldout.push_back(enc.run.final_heldout);
    }
  }
  for (auto& row : report.rows) row.summary = train::mean_std(row.accuracy);
  for (std::size_t m = 0; m < config.metrics.size(); ++m) {
    const auto& ar = report.rows[2 * m];
    const auto& mae = report.rows[2 * m + 1];
    std::size_t wins = 0;
    for (std::size_t s = 0; s < config.seeds.size(); ++s) wins += ar.accuracy[s] >= mae.accuracy[s];
    report.ar_wins.push_back(wins);
  }
  return report;
}

std::string ObjectiveReport::table() const {
  std::ostringstream out;
  out << "| objective | metric |";
  for (const auto s : seeds) out << " seed " << s << " |";
  out << " mean +- std |\n|---|---|";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << "---|";
  out << "---|\n";
  for (const auto& r : rows) {
    out << "| " << (r.objective == ete::Objective::kAutoregressive ? "AR" : "MAE") << " | "
        << ete::metric_name(r.metric) << " |";
    for (const double a : r.accuracy) out << " " << pct(a) << " |";
    out << " " << pm(r.summary) << " |\n";
  }
  for (std::size_t m = 0; m < ar_wins.size(); ++m) {
    out << "AR >= MAE (" << ete::metric_name(rows[2 * m].metric) << "): " << ar_wins[m] << "/"
        << seeds.size() << " seeds\n";
  }
  return out.str();
}

// -- joint versus separate --------------------------------------------------------------------

ModeReport compare_modes(const ModeConfig& config) {
  const auto mc = preset(config.preset);
  ModeReport report;
  report.seeds = config.seeds;
  report.rows.resize(2);
  report.rows[0].task_id = "burst";
  report.rows[1].task_id = "trend";
  report.budgets_matched = true;
  for (std::size_t si = 0; si < config.seeds.size(); ++si) {
    const auto seed = config.seeds[si];
    const auto corpus = data::generate_synthetic(
        pretrain_corpus_spec(seed, config.corpus_electrodes, config.corpus_windows));
    auto pc = config.pretrain;
    pc.seed = seed;
    const auto enc = pretrain_encoder(mc.ete, ete::Objective::kAutoregressive, corpus, pc);

    const auto a = data::generate_synthetic(task_spec(seed ^ kTaskSeedOffset, "burst",
                                                      config.task_a_electrodes, config.task_windows,
                                                      data::LabelRule::kBandArgmax, 4, config.band_gain));
    const auto b = data::generate_synthetic(task_spec((seed ^ kTaskSeedOffset) + 1, "trend",
                                                      config.task_b_electrodes, config.task_windows,
                                                      data::LabelRule::kEnergyTrend, 2));
    const std::vector<train::TaskData> tasks = {train::make_task(a, seed), train::make_task(b, seed)};
    auto fc = config.finetune;
    fc.seed = seed;
    const auto joint =
        train::finetune(enc.model, enc.vocab, tasks, mc.teg, train::FinetuneMode::kJoint, fc);
    const auto sep =
        train::finetune(enc.model, enc.vocab, tasks, mc.teg, train::FinetuneMode::kSeparate, fc);
    for (std::size_t t = 0; t < 2; ++t) {
      auto& row = report.rows[t];
      row.joint.push_back(joint.tasks[t].test_accuracy);
      row.separate.push_back(sep.tasks[t].test_accuracy);
      if (joint.tasks[t].sample_visits != sep.tasks[t].sample_visits ||
          joint.tasks[t].sample_visits != fc.epochs * tasks[t].train.samples.size()) {
        report.budgets_matched = false;
      }
      if (si == 0) {
        row.joint_visits = joint.tasks[t].sample_visits;
        row.separate_visits = sep.tasks[t].sample_visits;
      }
    }
    if (si == 0) {
      const auto again =
          train::finetune(enc.model, enc.vocab, tasks, mc.teg, train::FinetuneMode::kJoint, fc);
      report.deterministic = again.metrics == joint.metrics;
      for (std::size_t t = 0; t < 2; ++t) {
        report.deterministic = report.deterministic &&
                               again.tasks[t].test_accuracy == joint.tasks[t].test_accuracy &&
                               again.tasks[t].val_accuracy == joint.tasks[t].val_accuracy;
      }
    }
  }
  for (auto& row : report.rows) {
    row.joint_summary = train::mean_std(row.joint);
    row.separate_summary = train::mean_std(row.separate);
    row.delta = row.joint_summary.mean - row.separate_summary.mean;
  }
  return report;
}

std::string ModeReport::table() const {
  std::ostringstream out;
  out << "| task | separate | joint | delta (joint - separate) | sample visits |\n"
         "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const double d = 100.0 * r.delta;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f", d);
    out << "| " << r.task_id << " | " << pm(r.separate_summary) << " | " << pm(r.joint_summary)
        << " | " << buf << " | " << r.joint_visits << " / " << r.separate_visits << " |\n";
  }
  out << "deterministic rerun: " << (deterministic ? "yes" : "no")
      << "; budgets matched: " << (budgets_matched ? "yes" : "no") << "\n";
  return out.str();
}

// -- scaling grid ----------------------------------------------------------------------------

std::vector<ModelConfig> default_ladder() {
  std::vector<ModelConfig> out;
  const std::pair<std::size_t, std::size_t> sizes[] = {{16, 2}, {32, 2}, {64, 4}};
  for (const auto& [d, heads] : sizes) {
    ModelConfig m = preset("tiny");
    m.name = "toy-d" + std::to_string(d);
    m.ete.hidden = m.teg.hidden = d;
    m.ete.heads = m.teg.heads = heads;
    m.ete.head_size = m.teg.head_size = d / heads;
    m.ete.intermediate = m.teg.intermediate = 4 * d;
    m.validate();
    out.push_back(m);
  }
  return out;
}

ScalingReport run_scaling(const ScalingConfig& config) {
  const auto ladder = config.ladder.empty() ? default_ladder() : config.ladder;
  if (ladder.size() < 2) throw ConfigError("scaling ladder needs at least two configs");
  for (const double f : config.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("token fractions must lie in [0, 1]");
  }
  ScalingReport report;
  report.num_seeds = config.seeds.size();
  for (const auto seed : config.seeds) {
    const auto corpus = data::generate_synthetic(
        pretrain_corpus_spec(seed, config.corpus_electrodes, config.corpus_windows));
    const auto task_ds = data::generate_synthetic(
        task_spec(seed ^ kTaskSeedOffset, "order", config.task_electrodes, config.task_windows,
                  data::LabelRule::kBandArgmax, config.task_classes, config.band_gain));
    const std::vector<train::TaskData> tasks = {train::make_task(task_ds, seed)};
    std::map<std::string, double> full_loss;
    for (const auto& mc : ladder) {
      for (const double f : config.fractions) {
        auto pc = config.pretrain;
        pc.seed = seed;
        pc.steps = static_cast<std::size_t>(std::llround(f * static_cast<double>(config.pretrain.steps)));
        const auto enc = pretrain_encoder(mc.ete, ete::Objective::kAutoregressive, corpus, pc);
        auto fc = config.finetune;
        fc.seed = seed;
        const auto ft =
            train::finetune(enc.model, enc.vocab, tasks, mc.teg, train::FinetuneMode::kJoint, fc);
        ScalingRow row;
        row.seed = seed;
        row.config = mc.name;
        row.parameters = count_parameters(mc);
        row.fraction = f;
        row.tokens = enc.run.tokens_seen;
        row.heldout_loss = enc.run.final_heldout;
        row.accuracy = ft.tasks.front().test_accuracy;
        report.rows.push_back(row);
        if (f == 1.0) full_loss[mc.name] = row.heldout_loss;
      }
    }
    const auto small = full_loss.find(ladder.front().name);
    const auto large = full_loss.find(ladder.back().name);
    if (small != full_loss.end() && large != full_loss.end() && large->second <= small->second) {
      ++report.largest_wins;
    }
  }
  return report;
}

std::string ScalingReport::csv() const {
  std::ostringstream out;
  out << "config,parameters,seed,fraction,tokens,loss,accuracy\n";
  for (const auto& r : rows) {
    out << r.config << "," << r.parameters << "," << r.seed << "," << train::format_double(r.fraction)
        << "," << r.tokens << "," << train::format_double(r.heldout_loss) << ","
        << train::format_double(r.accuracy) << "\n";
  }
  return out.str();
}

std::string ScalingReport::gnuplot() const {
  // config -> fraction -> (tokens, sum loss, sum acc, n)
  struct Acc {
    std::size_t tokens = 0;
    double loss = 0.0, acc = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, std::map<double, Acc>> agg;
  std::map<std::string, std::size_t> params;
  for (const auto& r : rows) {
    if (!agg.count(r.config)) order.push_back(r.config);
    auto& a = agg[r.config][r.fraction];
    a.tokens = r.tokens;
    a.loss += r.heldout_loss;
    a.acc += r.accuracy;
    ++a.n;
    params[r.config] = r.parameters;
  }
  std::ostringstream out;
  out << "# columns: fraction tokens mean_loss mean_accuracy\n";
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out << "\n\n";
    out << "# " << order[i] << " (" << params[order[i]] << " parameters)\n";
    for (const auto& [f, a] : agg[order[i]]) {
      out << train::format_double(f) << " " << a.tokens << " "
          << train::format_double(a.loss / static_cast<double>(a.n)) << " "
          << train::format_double(a.acc / static_cast<double>(a.n)) << "\n";
    }
  }
  return out.str();
}

}  // namespace eegpt::harness
