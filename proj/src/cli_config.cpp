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

#include <fstream>
#include <sstream>

#include "eegpt/cli.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::cli {

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + "." + key + ": " + e.what());
  }
}

std::optional<fs::path> read_path(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  std::string s;
  read_opt(j, key, s, ctx);
  return fs::path(s);
}

json opt_path(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

json profile_json(const data::TokenProfile& p) {
  return {{"sample_rate", p.sample_rate},
          {"window_s", p.window_s},
          {"token_len", p.token_len},
          {"overlap", p.overlap}};
}

data::TokenProfile profile_from_json(const json& j) {
  require_keys(j, {"sample_rate", "window_s", "token_len", "overlap"}, "data.synthetic.profile");
  data::TokenProfile p;
  const std::string ctx = "data.synthetic.profile";
  read_opt(j, "sample_rate", p.sample_rate, ctx);
  read_opt(j, "window_s", p.window_s, ctx);
  read_opt(j, "token_len", p.token_len, ctx);
  read_opt(j, "overlap", p.overlap, ctx);
  return p;
}

ScalingWorkload scaling_from_json(const json& j) {
  require_keys(j,
               {"corpus_electrodes", "corpus_windows", "task_windows", "task_electrodes",
                "task_classes", "band_gain"},
               "data.scaling");
  ScalingWorkload w;
  const std::string ctx = "data.scaling";
  read_opt(j, "corpus_electrodes", w.corpus_electrodes, ctx);
  read_opt(j, "corpus_windows", w.corpus_windows, ctx);
  read_opt(j, "task_windows", w.task_windows, ctx);
  read_opt(j, "task_electrodes", w.task_electrodes, ctx);
  read_opt(j, "task_classes", w.task_classes, ctx);
  read_opt(j, "band_gain", w.band_gain, ctx);
  return w;
}

json scaling_json(const ScalingWorkload& w) {
  return {{"corpus_electrodes", w.corpus_electrodes}, {"corpus_windows", w.corpus_windows},
          {"task_windows", w.task_windows},           {"task_electrodes", w.task_electrodes},
          {"task_classes", w.task_classes},           {"band_gain", w.band_gain}};
}

}  // namespace

data::LabelRule parse_label_rule(const std::string& s) {
  if (s == "none") return data::LabelRule::kNone;
  if (s == "energy_argmax") return data::LabelRule::kEnergyArgmax;
  if (s == "energy_trend") return data::LabelRule::kEnergyTrend;
  if (s == "band_argmax") return data::LabelRule::kBandArgmax;
  throw ConfigError("unknown label rule '" + s +
                    "' (none, energy_argmax, energy_trend, band_argmax)");
}

std::string label_rule_name(data::LabelRule r) {
  switch (r) {
    case data::LabelRule::kNone: return "none";
    case data::LabelRule::kEnergyArgmax: return "energy_argmax";
    case data::LabelRule::kEnergyTrend: return "energy_trend";
    case data::LabelRule::kBandArgmax: return "band_argmax";
  }
  return "none";
}

json to_json(const data::SyntheticSpec& s) {
  json coeffs = json::array();
  for (const auto& c : s.coefficients) coeffs.push_back({{"phi1", c.phi1}, {"phi2", c.phi2}});
  return {{"seed", s.seed},
          {"name", s.name},
          {"task_id", s.task_id ? json(*s.task_id) : json(nullptr)},
          {"electrodes", s.electrodes},
          {"samples_per_electrode", s.samples_per_electrode},
          {"coefficients", coeffs},
          {"noise_std", s.noise_std},
          {"initial_value", s.initial_value},
          {"burn_in", s.burn_in},
          {"label_rule", label_rule_name(s.label_rule)},
          {"num_classes", s.num_classes},
          {"burst_gain", s.burst_gain},
          {"band_hz", s.band_hz},
          {"band_gain", s.band_gain},
          {"num_subjects", s.num_subjects},
          {"profile", profile_json(s.profile)}};
}

data::SyntheticSpec synthetic_spec_from_json(const json& j) {
  const std::string ctx = "data.synthetic";
  require_keys(j,
               {"seed", "name", "task_id", "electrodes", "samples_per_electrode", "windows",
                "coefficients", "noise_std", "initial_value", "burn_in", "label_rule",
                "num_classes", "burst_gain", "band_hz", "band_gain", "num_subjects", "profile"},
               ctx);
  data::SyntheticSpec s;
  read_opt(j, "seed", s.seed, ctx);
  read_opt(j, "name", s.name, ctx);
  if (j.contains("task_id") && !j.at("task_id").is_null()) {
    std::string t;
    read_opt(j, "task_id", t, ctx);
    s.task_id = t;
  }
  read_opt(j, "electrodes", s.electrodes, ctx);
  if (j.contains("profile")) s.profile = profile_from_json(j.at("profile"));
  if (j.contains("windows") && j.contains("samples_per_electrode")) {
    throw ConfigError(ctx + ": give either windows or samples_per_electrode");
  }
  read_opt(j, "samples_per_electrode", s.samples_per_electrode, ctx);
  if (j.contains("windows")) {
    std::size_t w = 0;
    read_opt(j, "windows", w, ctx);
    s.samples_per_electrode = w * s.profile.window_samples();
  }
  if (j.contains("coefficients")) {
    const auto& cs = j.at("coefficients");
    if (!cs.is_array()) throw ConfigError(ctx + ".coefficients: expected a list");
    for (const auto& c : cs) {
      require_keys(c, {"phi1", "phi2"}, ctx + ".coefficients[]");
      data::Ar2 a;
      read_opt(c, "phi1", a.phi1, ctx + ".coefficients[]");
      read_opt(c, "phi2", a.phi2, ctx + ".coefficients[]");
      s.coefficients.push_back(a);
    }
  }
  read_opt(j, "noise_std", s.noise_std, ctx);
  read_opt(j, "initial_value", s.initial_value, ctx);
  read_opt(j, "burn_in", s.burn_in, ctx);
  if (j.contains("label_rule")) {
    std::string r;
    read_opt(j, "label_rule", r, ctx);
    s.label_rule = parse_label_rule(r);
  }
  read_opt(j, "num_classes", s.num_classes, ctx);
  read_opt(j, "burst_gain", s.burst_gain, ctx);
  read_opt(j, "band_hz", s.band_hz, ctx);
  read_opt(j, "band_gain", s.band_gain, ctx);
  read_opt(j, "num_subjects", s.num_subjects, ctx);
  return s;
}

RunConfig parse_run_config(const json& j) {
  require_keys(j, {"model", "data", "train", "seeds"}, "config");
  RunConfig c;
  if (j.contains("model")) {
    json m = j.at("model");
    if (!m.is_object()) throw ConfigError("model: expected a JSON object");
    if (m.contains("ladder")) {
      if (!m.at("ladder").is_array()) throw ConfigError("model.ladder: expected a list");
      for (const auto& rung : m.at("ladder")) c.ladder.push_back(model_config_from_json(rung));
      m.erase("ladder");
    }
    c.model = model_config_from_json(m);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    const std::string ctx = "data";
    require_keys(d, {"synthetic", "pretrain", "tasks", "checkpoint", "finetune", "split_seed",
                     "scaling"},
                 ctx);
    if (d.contains("synthetic")) c.data.synthetic = synthetic_spec_from_json(d.at("synthetic"));
    c.data.pretrain = read_path(d, "pretrain", ctx);
    c.data.checkpoint = read_path(d, "checkpoint", ctx);
    c.data.finetune = read_path(d, "finetune", ctx);
    std::vector<std::string> tasks;
    read_opt(d, "tasks", tasks, ctx);
    for (const auto& t : tasks) c.data.tasks.emplace_back(t);
    read_opt(d, "split_seed", c.data.split_seed, ctx);
    if (d.contains("scaling")) c.data.scaling = scaling_from_json(d.at("scaling"));
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    const std::string ctx = "train";
    require_keys(t,
                 {"objective", "metric", "steps", "batch_size", "lr", "beta1", "beta2", "eps",
                  "weight_decay", "warmup_ratio", "mask_ratio", "eval_every", "eval_sequences",
                  "checkpoint_every", "resume", "mode", "epochs", "center_nodes", "fractions"},
                 ctx);
    auto& tr = c.train;
    std::string s;
    if (t.contains("objective")) {
      read_opt(t, "objective", s, ctx);
      tr.objective = ete::parse_objective(s);
    }
    if (t.contains("metric")) {
      read_opt(t, "metric", s, ctx);
      tr.metric = ete::parse_metric(s);
    }
    read_opt(t, "steps", tr.steps, ctx);
    read_opt(t, "batch_size", tr.batch_size, ctx);
    read_opt(t, "lr", tr.optimizer.lr, ctx);
    read_opt(t, "beta1", tr.optimizer.beta1, ctx);
    read_opt(t, "beta2", tr.optimizer.beta2, ctx);
    read_opt(t, "eps", tr.optimizer.eps, ctx);
    read_opt(t, "weight_decay", tr.optimizer.weight_decay, ctx);
    if (t.contains("warmup_ratio") && !t.at("warmup_ratio").is_null()) {
      double w = 0.0;
      read_opt(t, "warmup_ratio", w, ctx);
      tr.warmup_ratio = w;
    }
    read_opt(t, "mask_ratio", tr.mask_ratio, ctx);
    read_opt(t, "eval_every", tr.eval_every, ctx);
    read_opt(t, "eval_sequences", tr.eval_sequences, ctx);
    read_opt(t, "checkpoint_every", tr.checkpoint_every, ctx);
    tr.resume = read_path(t, "resume", ctx);
    if (t.contains("mode")) {
      read_opt(t, "mode", s, ctx);
      tr.mode = train::parse_mode(s);
    }
    read_opt(t, "epochs", tr.epochs, ctx);
    read_opt(t, "center_nodes", tr.center_nodes, ctx);
    read_opt(t, "fractions", tr.fractions, ctx);
    if (tr.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(tr.optimizer.lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
    if (!(tr.mask_ratio > 0.0 && tr.mask_ratio < 1.0)) {
      throw ConfigError("train.mask_ratio must lie in (0, 1)");
    }
    if (tr.warmup_ratio && !(*tr.warmup_ratio >= 0.0 && *tr.warmup_ratio <= 1.0)) {
      throw ConfigError("train.warmup_ratio must lie in [0, 1]");
    }
    for (double f : tr.fractions) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("train.fractions must lie in [0, 1]");
    }
  }
  if (j.contains("seeds")) {
    read_opt(j, "seeds", c.seeds, "config");
    if (c.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  json model = eegpt::to_json(c.model);
  if (!c.ladder.empty()) {
    json ladder = json::array();
    for (const auto& m : c.ladder) ladder.push_back(eegpt::to_json(m));
    model["ladder"] = ladder;
  }
  std::vector<std::string> tasks;
  for (const auto& t : c.data.tasks) tasks.push_back(t.string());
  json data = {{"synthetic", c.data.synthetic ? to_json(*c.data.synthetic) : json(nullptr)},
               {"pretrain", opt_path(c.data.pretrain)},
               {"tasks", tasks},
               {"checkpoint", opt_path(c.data.checkpoint)},
               {"finetune", opt_path(c.data.finetune)},
               {"split_seed", c.data.split_seed},
               {"scaling", scaling_json(c.data.scaling)}};
  const auto& t = c.train;
  json tr = {{"objective", ete::objective_name(t.objective)},
             {"metric", ete::metric_name(t.metric)},
             {"steps", t.steps},
             {"batch_size", t.batch_size},
             {"lr", t.optimizer.lr},
             {"beta1", t.optimizer.beta1},
             {"beta2", t.optimizer.beta2},
             {"eps", t.optimizer.eps},
             {"weight_decay", t.optimizer.weight_decay},
             {"warmup_ratio", t.warmup_ratio ? json(*t.warmup_ratio) : json(nullptr)},
             {"mask_ratio", t.mask_ratio},
             {"eval_every", t.eval_every},
             {"eval_sequences", t.eval_sequences},
             {"checkpoint_every", t.checkpoint_every},
             {"resume", opt_path(t.resume)},
             {"mode", train::mode_name(t.mode)},
             {"epochs", t.epochs},
             {"center_nodes", t.center_nodes},
             {"fractions", t.fractions}};
  return {{"model", model}, {"data", data}, {"train", tr}, {"seeds", c.seeds}};
}

train::PretrainConfig pretrain_config(const RunConfig& c, std::uint64_t seed) {
  train::PretrainConfig p;
  p.seed = seed;
  p.steps = c.train.steps;
  p.batch_size = c.train.batch_size;
  p.optimizer = c.train.optimizer;
  if (c.train.warmup_ratio) p.warmup_ratio = *c.train.warmup_ratio;
  p.metric = c.train.metric;
  p.mask_ratio = c.train.mask_ratio;
  p.eval_every = c.train.eval_every;
  p.eval_sequences = c.train.eval_sequences;
  p.checkpoint_every = c.train.checkpoint_every;
  return p;
}

train::FinetuneConfig finetune_config(const RunConfig& c, std::uint64_t seed) {
  train::FinetuneConfig f;
  f.seed = seed;
  f.epochs = c.train.epochs;
  f.batch_size = c.train.batch_size;
  f.optimizer = c.train.optimizer;
  if (c.train.warmup_ratio) f.warmup_ratio = *c.train.warmup_ratio;
  f.center_nodes = c.train.center_nodes;
  return f;
}

}  // namespace eegpt::cli
