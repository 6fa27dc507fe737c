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

#include "eegpt/cli.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "eegpt/checkpoint.hpp"
#include "eegpt/errors.hpp"
#include "eegpt/harness.hpp"
#include "eegpt/teg.hpp"

namespace eegpt::cli {

namespace {

// Same stream as the harness, so a CLI pretraining run and a harness run with
// the same seed start from the same encoder.
constexpr std::uint64_t kEncoderInitStream = 0x454E43ULL;

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

/// One writer per run directory. The lock file is created exclusively and
/// removed when the command returns, whatever the outcome.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".eegpt.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f) {
      throw ConfigError("run directory " + dir.string() + " is locked by another writer (" +
                        path_.string() + ")");
    }
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

void spill(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void write_snapshot(const fs::path& dir, const RunConfig& c) {
  spill(dir / "config.resolved.json", to_json(c).dump(2) + "\n");
}

RunConfig resolve(const Globals& g) {
  RunConfig c = g.config ? load_run_config(*g.config) : RunConfig{};
  if (g.seed) c.seeds = {*g.seed};
  return c;
}

fs::path require_out(const Globals& g, const char* verb) {
  if (!g.out) throw ConfigError(std::string(verb) + " needs --out <dir>");
  return *g.out;
}

fs::path seed_dir(const fs::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

bool is_checkpoint(const fs::path& p) { return fs::exists(p / "index.json"); }

/// An encoder checkpoint directory, or a pretraining run holding
/// seed_<s>/checkpoint (or checkpoint/ for a single-seed layout).
fs::path resolve_encoder(const fs::path& p, std::uint64_t seed) {
  for (const auto& c : {p, seed_dir(p, seed) / "checkpoint", p / "checkpoint"}) {
    if (is_checkpoint(c)) return c;
  }
  throw DataError("checkpoint not found: " + p.string());
}

fs::path resolve_graph(const fs::path& p, std::uint64_t seed, const std::string& task) {
  const fs::path sd = seed_dir(p, seed);
  for (const auto& c : {p, sd / "graph_joint", sd / ("graph_" + task), p / "graph_joint",
                        p / ("graph_" + task)}) {
    if (is_checkpoint(c)) return c;
  }
  throw DataError("graph checkpoint for task " + task + " not found under " + p.string());
}

ete::LoadedEncoder load_frozen(const fs::path& p) {
  auto le = ete::load(p);
  le.model.set_trainable(false);
  auto e = le.vocab.embeddings();
  e.set_requires_grad(false);
  return le;
}

std::vector<train::TaskData> load_tasks(const RunConfig& c) {
  if (c.data.tasks.empty()) throw ConfigError("data.tasks lists no datasets");
  std::vector<train::TaskData> out;
  for (const auto& p : c.data.tasks) out.push_back(train::make_task(data::read_dataset(p), c.data.split_seed));
  return out;
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

// -- gen-synthetic ---------------------------------------------------------------------------

int cmd_gen_synthetic(const Globals& g) {
  RunConfig c = resolve(g);
  if (!c.data.synthetic) throw ConfigError("gen-synthetic needs data.synthetic in the config");
  auto& spec = *c.data.synthetic;
  if (g.seed) spec.seed = *g.seed;
  c.seeds = {spec.seed};
  const fs::path out = require_out(g, "gen-synthetic");
  RunLock lock(out);
  const auto ds = data::generate_synthetic(spec);
  data::write_dataset(ds, out);
  write_snapshot(out, c);
  const auto m = data::manifest_of(ds);
  std::printf("dataset %s: %zu samples, %zu electrodes x %zu tokens x %zu points at %d Hz\n",
              m.name.c_str(), m.num_samples, m.shape[0], m.shape[1], m.shape[2], m.sample_rate);
  if (m.num_classes) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(*m.num_classes), 0);
    for (const auto& s : ds.samples) ++counts[static_cast<std::size_t>(*s.label)];
    std::printf("task %s, %d classes, counts", m.task_id ? m.task_id->c_str() : "-", *m.num_classes);
    for (auto n : counts) std::printf(" %zu", n);
    std::printf("\n");
  }
  std::printf("written to %s\n", out.string().c_str());
  return kExitOk;
}

// -- pretrain -------------------------------------------------------------------------------

int cmd_pretrain(const Globals& g) {
  const RunConfig c = resolve(g);
  const fs::path out = require_out(g, "pretrain");
  if (c.train.resume && c.seeds.size() != 1) {
    throw ConfigError("train.resume needs exactly one seed");
  }
  data::Dataset corpus;
  if (c.data.pretrain) {
    corpus = data::read_dataset(*c.data.pretrain);
  } else if (c.data.synthetic) {
    corpus = data::generate_synthetic(*c.data.synthetic);
  } else {
    throw ConfigError("pretrain needs data.pretrain or data.synthetic");
  }
  if (corpus.token_width() != c.model.ete.token_width) {
    throw ConfigError("corpus tokens are " + std::to_string(corpus.token_width()) +
                      " wide but the model expects " + std::to_string(c.model.ete.token_width));
  }
  const auto sp = data::split_dataset(corpus, c.data.split_seed);
  const auto train_set = tok::reorganize(data::subset(corpus, sp.train));
  const auto heldout = tok::reorganize(data::subset(corpus, sp.val));

  RunLock lock(out);
  write_snapshot(out, c);
  train::MetricsLog summary(out, {"seed", "initial_heldout", "final_heldout", "ratio", "steps",
                                  "tokens"});
  for (const auto seed : c.seeds) {
    Rng rng(seed, kEncoderInitStream);
    ete::EteModel model(c.model.ete, rng, c.train.objective);
    tok::ElectrodeVocabulary vocab(c.model.ete.token_width, rng);
    const auto r = train::pretrain(model, vocab, train_set, heldout, pretrain_config(c, seed),
                                   seed_dir(out, seed), c.train.resume);
    const double ratio = r.final_heldout / r.initial_heldout;
    summary.append({{"seed", static_cast<std::int64_t>(seed)},
                    {"initial_heldout", r.initial_heldout},
                    {"final_heldout", r.final_heldout},
                    {"ratio", ratio},
                    {"steps", static_cast<std::int64_t>(r.steps)},
                    {"tokens", static_cast<std::int64_t>(r.tokens_seen)}});
    std::printf("seed %" PRIu64 ": held-out %s loss %.6g -> %.6g (ratio %.4f) after %zu steps\n",
                seed, ete::metric_name(c.train.metric).c_str(), r.initial_heldout,
                r.final_heldout, ratio, r.steps);
  }
  return kExitOk;
}

// -- finetune -------------------------------------------------------------------------------

void print_summary(const std::map<std::string, std::vector<double>>& acc) {
  for (const auto& [task, xs] : acc) {
    const auto ms = train::mean_std(xs);
    std::printf("%s: accuracy %s +- %s %% over %zu seed(s)\n", task.c_str(), pct(ms.mean).c_str(),
                pct(ms.std).c_str(), xs.size());
  }
}

int cmd_finetune(const Globals& g) {
  const RunConfig c = resolve(g);
  const fs::path out = require_out(g, "finetune");
  if (!c.data.checkpoint) throw ConfigError("finetune needs data.checkpoint");
  const auto tasks = load_tasks(c);
  std::vector<fs::path> encoders;
  for (const auto seed : c.seeds) encoders.push_back(resolve_encoder(*c.data.checkpoint, seed));

  RunLock lock(out);
  write_snapshot(out, c);
  train::MetricsLog summary(out, {"seed", "task", "val_accuracy", "test_accuracy", "steps",
                                  "sample_visits"});
  std::map<std::string, std::vector<double>> acc;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    const auto seed = c.seeds[i];
    const auto enc = load_frozen(encoders[i]);
    const auto r = train::finetune(enc.model, enc.vocab, tasks, c.model.teg, c.train.mode,
                                   finetune_config(c, seed), seed_dir(out, seed));
    for (const auto& t : r.tasks) {
      summary.append({{"seed", static_cast<std::int64_t>(seed)},
                      {"task", t.task_id},
                      {"val_accuracy", t.val_accuracy},
                      {"test_accuracy", t.test_accuracy},
                      {"steps", static_cast<std::int64_t>(t.steps)},
                      {"sample_visits", static_cast<std::int64_t>(t.sample_visits)}});
      acc[t.task_id].push_back(t.test_accuracy);
      std::printf("seed %" PRIu64 " %s (%s): val %s %%, test %s %%, %zu steps\n", seed,
                  t.task_id.c_str(), train::mode_name(c.train.mode).c_str(),
                  pct(t.val_accuracy).c_str(), pct(t.test_accuracy).c_str(), t.steps);
    }
  }
  print_summary(acc);
  return kExitOk;
}

// -- eval -----------------------------------------------------------------------------------

int cmd_eval(const Globals& g) {
  const RunConfig c = resolve(g);
  const fs::path out = require_out(g, "eval");
  if (!c.data.checkpoint) throw ConfigError("eval needs data.checkpoint");
  if (!c.data.finetune) throw ConfigError("eval needs data.finetune");
  const auto tasks = load_tasks(c);

  RunLock lock(out);
  write_snapshot(out, c);
  train::MetricsLog log(out, {"seed", "task", "correct", "total", "accuracy"});
  std::map<std::string, std::vector<double>> acc;
  for (const auto seed : c.seeds) {
    const auto enc = load_frozen(resolve_encoder(*c.data.checkpoint, seed));
    for (const auto& t : tasks) {
      const auto graph = teg::load(resolve_graph(*c.data.finetune, seed, t.task_id));
      const auto m = train::evaluate(enc.model, graph, t.test, t.task_id);
      log.append({{"seed", static_cast<std::int64_t>(seed)},
                  {"task", t.task_id},
                  {"correct", static_cast<std::int64_t>(m.correct)},
                  {"total", static_cast<std::int64_t>(m.total)},
                  {"accuracy", m.accuracy}});
      acc[t.task_id].push_back(m.accuracy);
    }
  }
  train::MetricsLog summary(out / "summary", {"task", "mean", "std", "seeds"});
  for (const auto& [task, xs] : acc) {
    const auto ms = train::mean_std(xs);
    summary.append({{"task", task},
                    {"mean", ms.mean},
                    {"std", ms.std},
                    {"seeds", static_cast<std::int64_t>(xs.size())}});
  }
  print_summary(acc);
  return kExitOk;
}

// -- gradcheck ------------------------------------------------------------------------------

int cmd_gradcheck(const std::string& scope, bool inject_fault) {
  const auto groups = run_gradcheck_suite(scope, inject_fault);
  std::printf("%-40s %8s %12s %12s  %s\n", "parameter group", "count", "max_rel", "max_abs",
              "status");
  const GradcheckGroup* worst_group = nullptr;
  const nk::GradcheckEntry* worst = nullptr;
  double tol = 0.0;
  for (const auto& g : groups) {
    tol = g.report.tolerance;
    for (const auto& e : g.report.entries) {
      const bool ok = e.max_rel_error < g.report.tolerance;
      std::printf("%-40s %8zu %12.3e %12.3e  %s\n", (g.label + "/" + e.name).c_str(), e.count,
                  e.max_rel_error, e.max_abs_error, ok ? "ok" : "FAIL");
      if (!worst || e.max_rel_error > worst->max_rel_error) {
        worst = &e;
        worst_group = &g;
      }
    }
  }
  if (!worst) {
    std::printf("no parameters checked\n");
    return kExitOk;
  }
  const std::string name = worst_group->label + "/" + worst->name;
  if (worst->max_rel_error < tol) {
    std::printf("PASS: %zu groups, worst %s at %.3e (tolerance %.0e)\n", groups.size(),
                name.c_str(), worst->max_rel_error, tol);
    return kExitOk;
  }
  std::printf("FAIL: worst offender %s at %.3e (tolerance %.0e)\n", name.c_str(),
              worst->max_rel_error, tol);
  std::fprintf(stderr, "gradcheck failed: worst offender %s (max relative error %.3e)\n",
               name.c_str(), worst->max_rel_error);
  return kExitFailed;
}

// -- scaling --------------------------------------------------------------------------------

int cmd_scaling(const Globals& g) {
  const RunConfig c = resolve(g);
  const fs::path out = require_out(g, "scaling");
  harness::ScalingConfig sc;
  sc.seeds = c.seeds;
  sc.ladder = c.ladder;
  sc.fractions = c.train.fractions;
  sc.corpus_electrodes = c.data.scaling.corpus_electrodes;
  sc.corpus_windows = c.data.scaling.corpus_windows;
  sc.task_windows = c.data.scaling.task_windows;
  sc.task_electrodes = c.data.scaling.task_electrodes;
  sc.task_classes = c.data.scaling.task_classes;
  sc.band_gain = c.data.scaling.band_gain;
  sc.pretrain = pretrain_config(c, 0);
  sc.finetune = finetune_config(c, 0);

  RunLock lock(out);
  write_snapshot(out, c);
  const auto report = harness::run_scaling(sc);
  spill(out / "scaling.csv", report.csv());
  spill(out / "scaling.dat", report.gnuplot());
  std::printf("%zu rows -> %s\n", report.rows.size(), (out / "scaling.csv").string().c_str());
  std::printf("largest config at or below the smallest's final loss in %zu/%zu seeds\n",
              report.largest_wins, report.num_seeds);
  return kExitOk;
}

// -- inspect --------------------------------------------------------------------------------

int cmd_inspect(const fs::path& p) {
  json j;
  if (fs::exists(p / "manifest.json")) {
    const auto ds = data::read_dataset(p);
    const auto m = data::manifest_of(ds);
    j["kind"] = "dataset";
    j["name"] = m.name;
    j["version"] = m.version;
    j["sample_rate"] = m.sample_rate;
    j["electrodes"] = m.electrode_names;
    j["num_samples"] = m.num_samples;
    j["shape"] = m.shape;
    j["dtype"] = m.dtype;
    j["task_id"] = m.task_id ? json(*m.task_id) : json(nullptr);
    j["num_classes"] = m.num_classes ? json(*m.num_classes) : json(nullptr);
    std::map<std::string, std::size_t> subjects;
    for (const auto& s : m.subject_ids) ++subjects[s];
    j["num_subjects"] = subjects.size();
    if (m.num_classes) {
      std::vector<std::size_t> counts(static_cast<std::size_t>(*m.num_classes), 0);
      for (const auto& s : ds.samples) ++counts[static_cast<std::size_t>(*s.label)];
      j["label_counts"] = counts;
    }
  } else if (is_checkpoint(p)) {
    const auto tensors = ckpt::load_all(p);
    j["kind"] = "checkpoint";
    j["config"] = ckpt::read_config(p);
    json list = json::array();
    std::size_t total = 0;
    for (const auto& t : tensors) {
      list.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"count", t.tensor.size()}});
      total += t.tensor.size();
    }
    j["tensors"] = list;
    j["parameters"] = total;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, ckpt::checksum(tensors));
    j["checksum"] = buf;
  } else if (fs::exists(p / "config.resolved.json")) {
    j["kind"] = "run";
    j["config"] = json::parse(std::ifstream(p / "config.resolved.json"));
    std::vector<std::string> entries;
    for (const auto& e : fs::directory_iterator(p)) entries.push_back(e.path().filename().string());
    std::sort(entries.begin(), entries.end());
    j["entries"] = entries;
  } else {
    throw DataError("nothing to inspect at " + p.string() +
                    " (no manifest.json, index.json or config.resolved.json)");
  }
  std::printf("%s\n", j.dump(2).c_str());
  return kExitOk;
}

int resolve_threads(const Globals& g) {
  int n = 1;
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string(kThreadsEnv) + " is not an integer");
    }
  }
  if (g.threads) n = *g.threads;
  if (n < 1) throw ConfigError("thread count must be at least 1");
  return n;
}

constexpr const char* kFooter =
    "Exit codes: 0 ok, 1 gradient check failed or internal error, 2 configuration error,\n"
    "3 data or checkpoint error, 4 numeric divergence.\n"
    "EEGPT_THREADS sets the default for --threads.";

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Electrode-wise EEG pretraining and multi-task fine-tuning at desk scale."};
  app.footer(kFooter);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "run configuration (JSON)");
  app.add_option("--seed", g.seed, "single seed, overriding the config's seed list");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads (default from EEGPT_THREADS, else 1)");
  app.fallthrough();

  auto* gen = app.add_subcommand("gen-synthetic", "write a seeded synthetic EEGB dataset");
  auto* pre = app.add_subcommand("pretrain", "pretrain the temporal encoder");
  auto* fin = app.add_subcommand("finetune", "fine-tune the electrode graph over a frozen encoder");
  auto* evl = app.add_subcommand("eval", "test accuracy per task, mean and std over seeds");
  auto* gc = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  std::string scope = "all";
  bool inject_fault = false;
  gc->add_option("--scope", scope, "numkit, ete, teg or all")
      ->check(CLI::IsMember({"numkit", "ete", "teg", "all"}));
  gc->add_flag("--inject-fault", inject_fault,
               "add a primitive with a wrong backward (negative control)");
  auto* sca = app.add_subcommand("scaling", "model-size x token-budget grid");
  auto* ins = app.add_subcommand("inspect", "describe a dataset, checkpoint or run directory");
  std::string inspect_path;
  ins->add_option("path", inspect_path, "directory to describe")->required();
  for (auto* s : {gen, pre, fin, evl, gc, sca, ins}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    Eigen::setNbThreads(resolve_threads(g));
    if (gen->parsed()) return cmd_gen_synthetic(g);
    if (pre->parsed()) return cmd_pretrain(g);
    if (fin->parsed()) return cmd_finetune(g);
    if (evl->parsed()) return cmd_eval(g);
    if (gc->parsed()) return cmd_gradcheck(scope, inject_fault);
    if (sca->parsed()) return cmd_scaling(g);
    if (ins->parsed()) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailed;
  }
  return kExitFailed;
}

}  // namespace eegpt::cli
