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

// Acceptance run: one PASS/FAIL line per criterion. With arguments, only the
// listed criterion numbers run. Tables and run dirs go under
// $EEGPT_ACCEPTANCE_DIR, else a temp directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eegpt/cli.hpp"
#include "eegpt/dataio.hpp"
#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"
#include "eegpt/ete.hpp"
#include "eegpt/harness.hpp"
#include "eegpt/model_config.hpp"
#include "eegpt/teg.hpp"
#include "eegpt/tokenizer.hpp"
#include "eegpt/train.hpp"

using namespace eegpt;
namespace fs = std::filesystem;
using nk::Tensor;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path g_out;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

fs::path fresh(const std::string& name) {
  const fs::path p = g_out / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor gaussian(nk::Shape shape, Rng& rng, double sd = 1.0) {
  nk::Vector v(static_cast<Eigen::Index>(nk::shape_numel(shape)));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

// Off the initial scale so attention is far from uniform.
void perturb(const std::vector<nk::NamedTensor>& params, Rng& rng) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const bool gain = p.name.find("norm") != std::string::npos;
    const double sd = t.rank() == 2 ? 1.0 / std::sqrt(static_cast<double>(t.rows())) : 0.5;
    for (auto& x : t.mutable_values()) x = gain ? 1.0 + 0.2 * rng.normal() : sd * rng.normal();
  }
}

bool same_bits(const nk::Vector& a, const nk::Vector& b, Eigen::Index begin, Eigen::Index count) {
  return std::memcmp(a.data() + begin, b.data() + begin,
                     static_cast<std::size_t>(count) * sizeof(double)) == 0;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

// -- 1 ------------------------------------------------------------------------------------

Verdict gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto groups = cli::run_gradcheck_suite("all");
  const double secs = seconds_since(t0);

  // every parameter of Tiny ETE under both objectives and all metrics, plus Tiny TEG
  const auto tiny = preset("tiny");
  std::set<std::string> want;
  Rng rng(0);
  for (auto obj : {ete::Objective::kAutoregressive, ete::Objective::kMasked}) {
    ete::EteModel m(tiny.ete, rng, obj);
    const std::string o = obj == ete::Objective::kAutoregressive ? "ar" : "mae";
    for (const char* metric : {"l2", "l1", "cos"}) {
      for (const auto& p : m.named_parameters()) want.insert("ete." + o + "." + metric + "/" + p.name);
    }
  }
  teg::TegModel g(tiny.teg, rng);
  g.register_task("a", 3, rng);
  g.register_task("b", 2, rng);
  for (const auto& p : g.named_parameters()) want.insert("teg.mixed/" + p.name);

  double worst = 0.0;
  std::string worst_name;
  std::set<std::string> seen;
  bool ok = true;
  for (const auto& gr : groups) {
    ok = ok && gr.report.passed() && gr.report.epsilon == 1e-6 && gr.report.tolerance == 1e-5;
    for (const auto& e : gr.report.entries) {
      seen.insert(gr.label + "/" + e.name);
      if (e.max_rel_error >= worst) {
        worst = e.max_rel_error;
        worst_name = gr.label + "/" + e.name;
      }
    }
  }
  std::size_t missing = 0;
  for (const auto& w : want) missing += seen.count(w) == 0;
  const auto neg = cli::run_gradcheck_suite("numkit", true);
  const bool caught = std::any_of(neg.begin(), neg.end(),
                                  [](const auto& x) { return !x.report.passed(); });
  const bool pass = ok && missing == 0 && worst < 1e-5 && secs < 300.0 && caught;
  return {pass, std::to_string(seen.size()) + " parameter groups, worst " + worst_name + " " +
                    fmt("%.2e", worst) + ", missing " + std::to_string(missing) +
                    ", negative control " + (caught ? "caught" : "MISSED") + ", " +
                    fmt("%.0f s", secs)};
}

// -- 2 ------------------------------------------------------------------------------------

Verdict causality() {
  const auto cfg = preset("tiny").ete;
  const std::size_t C = cfg.token_width;
  std::size_t violations = 0, vacuous = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(trial, 0xCA05A1);
    ete::EteModel m(cfg, rng);
    perturb(m.named_parameters(), rng);
    const std::size_t S = 2 + rng.below(cfg.max_len - 1);  // 2..max_len
    const std::size_t tp = 1 + rng.below(S - 1);           // 1..S-1
    const Tensor seq = gaussian({S, C}, rng);
    nk::Vector v2 = seq.values();
    for (std::size_t c = 0; c < C; ++c) v2[static_cast<Eigen::Index>(tp * C + c)] += rng.normal();
    const Tensor seq2({S, C}, v2);
    const auto a = m.forward(seq, S), b = m.forward(seq2, S);
    const Eigen::Index cp = static_cast<Eigen::Index>(tp * C);
    const Eigen::Index hp = static_cast<Eigen::Index>(tp * cfg.hidden);
    if (!same_bits(a.predictions.values(), b.predictions.values(), 0, cp) ||
        !same_bits(a.hidden.values(), b.hidden.values(), 0, hp)) {
      ++violations;
    }
    if (same_bits(a.predictions.values(), b.predictions.values(), cp, static_cast<Eigen::Index>(C))) {
      ++vacuous;  // the perturbed position itself must move
    }
  }
  return {violations == 0 && vacuous == 0,
          "100 model/sequence pairs, " + std::to_string(violations) +
              " with earlier predictions changed, " + std::to_string(vacuous) +
              " where the perturbed position did not respond"};
}

// -- 3 ------------------------------------------------------------------------------------

Verdict beta_isolation() {
  const auto cfg = preset("tiny").teg;
  double max_diff = 0.0;
  std::size_t leaks = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(trial, 0xBE7A);
    teg::TegModel g(cfg, rng);
    g.register_task("a", 3, rng);
    g.register_task("b", 2, rng);
    perturb(g.named_parameters(), rng);
    // task a draws from ids 0..19, task b from 10..29: overlapping sets
    const std::size_t n = 2 + rng.below(5);
    std::vector<teg::TegInput> batch;
    std::vector<int> labels;
    std::set<std::size_t> used;
    for (std::size_t i = 0; i < n; ++i) {
      const bool a = i == 0 || (i > 1 && rng.below(2) == 0);
      std::vector<std::size_t> pool(20);
      for (std::size_t k = 0; k < 20; ++k) pool[k] = k + (a ? 0 : 10);
      rng.shuffle(pool);
      pool.resize(1 + rng.below(6));
      used.insert(pool.begin(), pool.end());
      batch.push_back({gaussian({pool.size(), cfg.hidden}, rng), {pool}, a ? "a" : "b"});
      labels.push_back(static_cast<int>(rng.below(a ? 3 : 2)));
    }
    const auto logits = g.batch_forward(batch);
    for (std::size_t i = 0; i < n; ++i) {
      const auto solo = g.forward_solo(batch[i].z, batch[i].activation, batch[i].task_id);
      max_diff = std::max(max_diff, (solo.values() - logits[i].values()).cwiseAbs().maxCoeff());
    }
    nk::backward(teg::classification_loss(logits, labels));
    const nk::Vector grad = g.nodes.grad();
    if (grad.size() == 0) continue;  // never touched: nothing leaked
    for (std::size_t r = 0; r < kNumElectrodes; ++r) {
      if (used.count(r)) continue;
      const auto row = grad.segment(static_cast<Eigen::Index>(r * cfg.hidden),
                                    static_cast<Eigen::Index>(cfg.hidden));
      if ((row.array() != 0.0).any()) ++leaks;
    }
  }
  return {max_diff <= 1e-12 && leaks == 0,
          "100 mixed batches, max |batch - solo| " + fmt("%.2e", max_diff) + ", " +
              std::to_string(leaks) + " inactive node rows with non-zero gradient"};
}

// -- 4 ------------------------------------------------------------------------------------

Verdict parameter_counts() {
  const std::pair<const char*, double> table[] = {
      {"base", 1.46e6}, {"large", 11.29e6}, {"huge", 183.8e6}, {"giant", 1.09e9}};
  bool pass = true;
  std::string detail;
  for (const auto& [name, want] : table) {
    const auto c = preset(name);
    const double got = static_cast<double>(count_parameters(c));
    const double rel = got / want - 1.0;
    const bool split = c.ete.hidden == c.ete.heads * c.ete.head_size &&
                       c.teg.hidden == c.teg.heads * c.teg.head_size;
    pass = pass && std::abs(rel) <= 0.10 && split;
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + fmt("%.4g", got) + " (" +
              fmt("%+.1f%%", 100.0 * rel) + (split ? "" : ", hidden != heads x head_size") + ")";
  }
  return {pass, detail};
}

// -- 5 ------------------------------------------------------------------------------------

Verdict tokenization() {
  const data::TokenProfile p;
  data::EegRecording rec;
  rec.electrode_names = {"FZ", "CZ"};
  rec.sample_rate = 256;
  rec.subject_id = "s";
  Rng rng(5);
  rec.signal = gaussian({2, 1024}, rng).matrix();
  const auto samples = data::segment_and_tokenize(rec, p);
  const bool pass = p.window_samples() == 1024 && p.stride() == 32 && p.tokens_per_window() == 25 &&
                    samples.size() == 1 && samples[0].num_tokens == 25 &&
                    samples[0].token_width() == 256;
  return {pass, "4 s at 256 Hz, 256-point tokens, overlap 0.875: stride " +
                    std::to_string(p.stride()) + ", " +
                    std::to_string(samples.empty() ? 0 : samples[0].num_tokens) +
                    " tokens per electrode"};
}

// -- 6 ------------------------------------------------------------------------------------

Verdict learning_signal() {
  const auto corpus = data::generate_synthetic(harness::pretrain_corpus_spec(0, 32, 80));
  const auto sp = data::split_dataset(corpus, 0);
  const auto train_set = tok::reorganize(data::subset(corpus, sp.train));
  const auto heldout = tok::reorganize(data::subset(corpus, sp.val));
  train::PretrainConfig pc;
  pc.seed = 0;
  pc.steps = 2000;
  pc.eval_every = 100;
  auto once = [&](const fs::path& dir, double& secs) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(0, 0x454E43);
    ete::EteModel m(preset("tiny").ete, rng);
    tok::ElectrodeVocabulary v(256, rng);
    auto r = train::pretrain(m, v, train_set, heldout, pc, dir);
    secs = seconds_since(t0);
    return r;
  };
  double s1 = 0, s2 = 0;
  const auto d1 = fresh("c6_run1"), d2 = fresh("c6_run2");
  const auto r1 = once(d1, s1);
  const auto r2 = once(d2, s2);
  const double ratio = r1.final_heldout / r1.initial_heldout;
  const auto t1 = tree(d1);
  const bool same = t1 == tree(d2) && t1.count("metrics.jsonl") && t1.count("metrics.csv");
  const std::size_t seqs = corpus.samples.size() * corpus.electrode_names.size();
  return {ratio <= 0.5 && s1 < 600.0 && same && seqs >= 2000 && corpus.electrode_names.size() >= 32,
          std::to_string(corpus.electrode_names.size()) + " electrodes x " +
              std::to_string(corpus.samples.size()) + " windows (" + std::to_string(seqs) +
              " sequences), held-out l2 " + fmt("%.4f", r1.initial_heldout) + " -> " +
              fmt("%.4f", r1.final_heldout) + " (ratio " + fmt("%.3f", ratio) + ") in " +
              fmt("%.0f s", s1) + ", rerun " + (same ? "identical" : "DIFFERS")};
}

// -- 7 ------------------------------------------------------------------------------------

Verdict ar_vs_mae() {
  harness::ObjectiveConfig oc;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = harness::compare_objectives(oc);
  const auto table = rep.table();
  spill(g_out / "c7_objectives.md", table);
  std::printf("%s", table.c_str());
  const std::size_t wins = rep.ar_wins.empty() ? 0 : rep.ar_wins.front();
  return {wins >= 2, "AR >= MAE in " + std::to_string(wins) + "/" +
                         std::to_string(rep.seeds.size()) + " paired seeds, " +
                         std::to_string(oc.pretrain.steps) + " pretraining steps each, " +
                         fmt("%.0f s", seconds_since(t0))};
}

// -- 8 ------------------------------------------------------------------------------------

Verdict joint_vs_separate() {
  harness::ModeConfig mc;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = harness::compare_modes(mc);
  const auto table = rep.table();
  spill(g_out / "c8_modes.md", table);
  std::printf("%s", table.c_str());
  std::string deltas;
  for (const auto& r : rep.rows) {
    deltas += " " + r.task_id + " " + fmt("%+.1f", 100.0 * r.delta);
  }
  return {rep.deterministic && rep.budgets_matched,
          std::string("deterministic ") + (rep.deterministic ? "yes" : "NO") +
              ", budgets matched " + (rep.budgets_matched ? "yes" : "NO") +
              ", joint - separate (reported, not asserted):" + deltas + " points, " +
              fmt("%.0f s", seconds_since(t0))};
}

// -- 9 ------------------------------------------------------------------------------------

Verdict scaling() {
  harness::ScalingConfig sc;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = harness::run_scaling(sc);
  const double secs = seconds_since(t0);
  spill(g_out / "c9_scaling.csv", rep.csv());
  spill(g_out / "c9_scaling.dat", rep.gnuplot());
  // Summarizable: per config the mean loss over seeds never rises with the budget.
  std::map<std::string, std::map<double, std::pair<double, int>>> agg;
  for (const auto& r : rep.rows) {
    auto& a = agg[r.config][r.fraction];
    a.first += r.heldout_loss;
    ++a.second;
  }
  bool monotone = true;
  for (const auto& [cfg, by_f] : agg) {
    double prev = INFINITY;
    for (const auto& [f, a] : by_f) {
      const double mean = a.first / a.second;
      monotone = monotone && mean <= prev;
      prev = mean;
    }
  }
  const std::size_t want_rows = 3 * sc.fractions.size() * sc.seeds.size();
  return {rep.rows.size() == want_rows && secs < 3600.0 && rep.largest_wins >= 2 && monotone,
          std::to_string(rep.rows.size()) + " rows, largest <= smallest final loss in " +
              std::to_string(rep.largest_wins) + "/" + std::to_string(rep.num_seeds) +
              " seeds, mean loss monotone in budget " + (monotone ? "yes" : "NO") + ", " +
              fmt("%.0f s", secs)};
}

// -- 10 -----------------------------------------------------------------------------------

int cli_run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"eegpt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

Verdict round_trip_and_determinism() {
  // lossless at storage precision
  auto spec = harness::task_spec(11, "rt", {"FZ", "CZ", "PZ", "OZ"}, 40,
                                 data::LabelRule::kBandArgmax, 3);
  const auto ds = data::generate_synthetic(spec);
  const auto dir = fresh("c10_eegb");
  data::write_dataset(ds, dir);
  const auto back = data::read_dataset(dir);
  bool lossless = back.samples.size() == ds.samples.size() &&
                  back.electrode_names == ds.electrode_names && back.name == ds.name &&
                  back.task_id == ds.task_id && back.num_classes == ds.num_classes &&
                  back.sample_rate == ds.sample_rate;
  for (std::size_t i = 0; lossless && i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    const nk::Matrix want = a.tokens.cast<float>().cast<double>();
    lossless = a.label == b.label && a.subject_id == b.subject_id && a.electrodes == b.electrodes &&
               a.num_tokens == b.num_tokens && want == b.tokens;
  }
  data::write_dataset(back, fresh("c10_eegb2"));
  lossless = lossless && slurp(dir / "data.bin") == slurp(g_out / "c10_eegb2" / "data.bin");

  // every file-writing command, run twice
  const auto work = fresh("c10_cli");
  const json w = {{"hidden", 8}, {"heads", 2}, {"head_size", 4}, {"intermediate", 16}, {"layers", 1}};
  json ladder = json::array();
  for (int h : {4, 8, 16}) {
    const json lw = {{"hidden", h}, {"heads", 2}, {"head_size", h / 2}, {"intermediate", 2 * h},
                     {"layers", 1}};
    ladder.push_back({{"preset", "tiny"}, {"name", "h" + std::to_string(h)}, {"ete", lw}, {"teg", lw}});
  }
  json model = {{"preset", "tiny"}, {"ete", w}, {"teg", w}, {"ladder", ladder}};
  auto task_cfg = [&](const std::string& id, std::vector<std::string> el) {
    auto s = harness::task_spec(21, id, std::move(el), 40, data::LabelRule::kBandArgmax, 2);
    s.burn_in = 100;
    return cli::to_json(s);
  };
  bool all_same = true;
  std::string differing;
  std::vector<std::string> runs = {"a", "b"};
  for (const auto& r : runs) {
    const fs::path base = work / r;
    const json corpus = cli::to_json(harness::pretrain_corpus_spec(3, 4, 20));
    auto cfg_file = [&](const std::string& name, json data, json train_extra) {
      json train = {{"steps", 20}, {"batch_size", 4}, {"eval_every", 5}, {"eval_sequences", 8},
                    {"epochs", 2}, {"checkpoint_every", 10}};
      for (auto& [k, v] : train_extra.items()) train[k] = v;
      const json j = {{"model", model}, {"data", data}, {"train", train}, {"seeds", {0, 1}}};
      const fs::path p = base / (name + ".json");
      spill(p, j.dump(2));
      return p.string();
    };
    const std::string o = base.string();
    cli_run({"gen-synthetic", "--config", cfg_file("g1", {{"synthetic", task_cfg("x", {"FZ", "CZ", "PZ"})}}, json::object()), "--out", o + "/task_x"});
    cli_run({"gen-synthetic", "--config", cfg_file("g2", {{"synthetic", task_cfg("y", {"CZ", "PZ", "OZ"})}}, json::object()), "--out", o + "/task_y"});
    const json tasks = {o + "/task_x", o + "/task_y"};
    cli_run({"pretrain", "--config", cfg_file("p", {{"synthetic", corpus}}, json::object()), "--out", o + "/pre"});
    cli_run({"finetune", "--config", cfg_file("fj", {{"checkpoint", o + "/pre"}, {"tasks", tasks}}, json::object()), "--out", o + "/ft_joint"});
    cli_run({"finetune", "--config", cfg_file("fs", {{"checkpoint", o + "/pre"}, {"tasks", tasks}}, {{"mode", "separate"}}), "--out", o + "/ft_sep"});
    cli_run({"eval", "--config", cfg_file("e", {{"checkpoint", o + "/pre"}, {"finetune", o + "/ft_sep"}, {"tasks", tasks}}, json::object()), "--out", o + "/eval"});
    cli_run({"scaling", "--config", cfg_file("s", {{"scaling", {{"corpus_electrodes", 3}, {"corpus_windows", 10}, {"task_windows", 30}, {"task_electrodes", {"FZ", "CZ"}}, {"task_classes", 2}}}}, {{"fractions", {0.0, 0.5, 1.0}}, {"epochs", 1}}), "--out", o + "/scaling"});
  }
  // config snapshots embed the run's own paths; everything else must match
  const auto ta = tree(work / "a"), tb = tree(work / "b");
  std::size_t compared = 0, metric_files = 0;
  for (const auto& [rel, bytes] : ta) {
    if (rel.ends_with(".json") && rel.find('/') == std::string::npos) continue;  // input configs
    if (rel.ends_with("config.resolved.json")) continue;
    ++compared;
    if (rel.ends_with("metrics.jsonl") || rel.ends_with("metrics.csv") || rel.ends_with(".csv")) ++metric_files;
    auto it = tb.find(rel);
    if (it == tb.end() || it->second != bytes) {
      all_same = false;
      differing += " " + rel;
    }
  }
  const bool have_outputs = ta.size() == tb.size() && metric_files >= 10 &&
                            ta.count("scaling/scaling.csv") && ta.count("eval/metrics.jsonl");
  return {lossless && all_same && have_outputs,
          std::string("EEGB round trip ") + (lossless ? "lossless" : "LOSSY") + " at f32; " +
              std::to_string(compared) + " output files (" + std::to_string(metric_files) +
              " metrics) from gen-synthetic, pretrain, finetune x2, eval, scaling " +
              (all_same ? "byte-identical on rerun" : "DIFFER:" + differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const char* env = std::getenv("EEGPT_ACCEPTANCE_DIR");
  g_out = env ? fs::path(env) : fs::temp_directory_path() / "eegpt_acceptance";
  fs::create_directories(g_out);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"causality", causality},
      {"beta-mask isolation", beta_isolation},
      {"parameter counts", parameter_counts},
      {"tokenization arithmetic", tokenization},
      {"learning signal", learning_signal},
      {"AR vs MAE protocol", ar_vs_mae},
      {"joint vs separate protocol", joint_vs_separate},
      {"scaling protocol", scaling},
      {"round trip and determinism", round_trip_and_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first,
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
