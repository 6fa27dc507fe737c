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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eegpt/cli.hpp"
#include "eegpt/errors.hpp"
#include "eegpt/harness.hpp"
#include "eegpt/teg.hpp"

using namespace eegpt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr together
};

Outcome sh(const std::string& args) {
  const std::string cmd = std::string(EEGPT_CLI) + " " + args + " 2>&1";
  Outcome o;
  std::FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) o.output.append(buf, n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eegpt_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

json small_synthetic(std::uint64_t seed) {
  return {{"seed", seed},
          {"name", "corpus"},
          {"electrodes", {"FZ", "CZ", "PZ"}},
          {"windows", 12},
          {"burn_in", 100},
          {"num_subjects", 10}};
}

json small_model() {
  const json w = {{"hidden", 8}, {"heads", 2}, {"head_size", 4}, {"intermediate", 16},
                  {"layers", 1}};
  return {{"preset", "tiny"}, {"ete", w}, {"teg", w}};
}

}  // namespace

TEST_CASE("run config is strict and round-trips") {
  CHECK_THROWS_AS(cli::parse_run_config(json{{"modle", json::object()}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"train", {{"stpes", 3}}}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"data", {{"synthetic", {{"sed", 1}}}}}}),
                  ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"train", {{"steps", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"seeds", json::array()}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"train", {{"mode", "both"}}}}), ConfigError);
  CHECK_THROWS_AS(
      cli::parse_run_config(json{{"data", {{"synthetic", {{"label_rule", "loudest"}}}}}}),
      ConfigError);

  const json j = {{"model", small_model()},
                  {"data", {{"synthetic", small_synthetic(4)}, {"tasks", {"a", "b"}}}},
                  {"train", {{"steps", 7}, {"lr", 0.01}, {"mode", "separate"}}},
                  {"seeds", {3, 4}}};
  const auto c = cli::parse_run_config(j);
  CHECK(c.model.ete.hidden == 8);
  CHECK(c.train.steps == 7);
  CHECK(c.train.mode == train::FinetuneMode::kSeparate);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.data.synthetic->samples_per_electrode == 12 * 1024);
  const json resolved = cli::to_json(c);
  CHECK(cli::to_json(cli::parse_run_config(resolved)) == resolved);
  // warmup falls back per command when unset
  CHECK(cli::pretrain_config(c, 0).warmup_ratio == 0.03);
  CHECK(cli::finetune_config(c, 0).warmup_ratio == 0.1);
}

TEST_CASE("gen-synthetic writes a readable, reproducible dataset") {
  const auto dir = fresh_dir("gen");
  const auto cfg = write_config(dir, {{"data", {{"synthetic", small_synthetic(5)}}}});
  auto a = sh("gen-synthetic --config " + cfg.string() + " --out " + (dir / "a").string());
  CHECK(a.code == 0);
  CHECK(a.output.find("written to") != std::string::npos);
  auto b = sh("gen-synthetic --config " + cfg.string() + " --out " + (dir / "b").string());
  CHECK(b.code == 0);
  CHECK(slurp(dir / "a" / "data.bin") == slurp(dir / "b" / "data.bin"));
  CHECK(slurp(dir / "a" / "config.resolved.json") == slurp(dir / "b" / "config.resolved.json"));
  CHECK_FALSE(fs::exists(dir / "a" / ".eegpt.lock"));
  auto c = sh("gen-synthetic --config " + cfg.string() + " --seed 6 --out " + (dir / "c").string());
  CHECK(c.code == 0);
  CHECK(slurp(dir / "a" / "data.bin") != slurp(dir / "c" / "data.bin"));

  auto ins = sh("inspect " + (dir / "a").string());
  CHECK(ins.code == 0);
  const auto j = json::parse(ins.output);
  CHECK(j.at("kind") == "dataset");
  CHECK(j.at("electrodes").size() == 3);
  CHECK(data::read_dataset(dir / "a").samples.size() == 12);
}

TEST_CASE("exit codes: config 2, data 3, numeric 4, failed check 1") {
  const auto dir = fresh_dir("codes");
  json bad = small_synthetic(1);
  bad["coefficients"] = {{{"phi1", 1.2}, {"phi2", 0.1}}, {{"phi1", 0.5}, {"phi2", 0.1}},
                         {{"phi1", 0.5}, {"phi2", 0.1}}};
  auto cfg = write_config(dir, {{"data", {{"synthetic", bad}}}});
  auto r = sh("gen-synthetic --config " + cfg.string() + " --out " + (dir / "x").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("non-stationary coefficients") != std::string::npos);

  cfg = write_config(dir, {{"data", {{"synthetic", small_synthetic(1)}}}, {"trian", 1}});
  CHECK(sh("pretrain --config " + cfg.string() + " --out " + (dir / "y").string()).code == 2);

  const fs::path missing = dir / "no_such_checkpoint";
  cfg = write_config(dir, {{"data", {{"checkpoint", missing.string()}, {"tasks", {"t"}}}}});
  r = sh("finetune --config " + cfg.string() + " --out " + (dir / "z").string());
  CHECK(r.code == 3);
  // the task dataset is read first here; point it at a real one to reach the checkpoint
  const auto task_dir = dir / "task";
  auto spec = harness::task_spec(2, "t", {"FZ", "CZ"}, 20, data::LabelRule::kBandArgmax, 2);
  spec.burn_in = 50;
  data::write_dataset(data::generate_synthetic(spec), task_dir);
  cfg = write_config(dir, {{"data", {{"checkpoint", missing.string()},
                                     {"tasks", {task_dir.string()}}}}});
  r = sh("finetune --config " + cfg.string() + " --out " + (dir / "z").string());
  CHECK(r.code == 3);
  CHECK(r.output.find(missing.string()) != std::string::npos);

  cfg = write_config(dir, {{"model", small_model()},
                           {"data", {{"synthetic", small_synthetic(1)}}},
                           {"train", {{"steps", 5}, {"batch_size", 2}, {"lr", 1e200},
                                      {"warmup_ratio", 0.0}, {"eval_every", 0},
                                      {"eval_sequences", 4}}}});
  r = sh("pretrain --config " + cfg.string() + " --out " + (dir / "div").string());
  CHECK(r.code == 4);
  CHECK(r.output.find("diverged") != std::string::npos);

  r = sh("gradcheck --scope numkit --inject-fault");
  CHECK(r.code == 1);
  CHECK(r.output.find("worst offender fault.faulty_square") != std::string::npos);
  CHECK(sh("gradcheck --scope numkit").code == 0);
  CHECK(sh("gradcheck --scope everything").code == 2);
  CHECK(sh("inspect " + missing.string()).code == 3);
  CHECK(sh("--threads 0 gradcheck --scope numkit").code == 2);
}

TEST_CASE("a second writer is refused while the lock file exists") {
  const auto dir = fresh_dir("lock");
  const auto cfg = write_config(dir, {{"data", {{"synthetic", small_synthetic(5)}}}});
  fs::create_directories(dir / "out");
  std::ofstream(dir / "out" / ".eegpt.lock") << "held";
  auto r = sh("gen-synthetic --config " + cfg.string() + " --out " + (dir / "out").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("locked") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "data.bin"));
}

TEST_CASE("eval on an always-correct graph reports accuracy 1") {
  const auto dir = fresh_dir("eval");
  auto spec = harness::task_spec(3, "easy", {"FZ", "CZ"}, 30, data::LabelRule::kBandArgmax, 3);
  spec.burn_in = 50;
  auto ds = data::generate_synthetic(spec);
  for (auto& s : ds.samples) s.label = 1;
  data::write_dataset(ds, dir / "task");

  const auto model = model_config_from_json(small_model());
  Rng rng(1);
  ete::EteModel enc(model.ete, rng);
  tok::ElectrodeVocabulary vocab(model.ete.token_width, rng);
  ete::save(dir / "encoder", enc, vocab);
  teg::TegModel g(model.teg, rng);
  g.register_task("easy", 3, rng);
  {
    nk::Tensor w = g.heads.at("easy").weight;
    w.mutable_values().setZero();
    nk::Tensor b = g.heads.at("easy").bias;
    b.mutable_values() << 0.0, 5.0, 0.0;
  }
  teg::save(dir / "graph", g);

  const auto cfg = write_config(dir, {{"model", small_model()},
                                      {"data", {{"checkpoint", (dir / "encoder").string()},
                                                {"finetune", (dir / "graph").string()},
                                                {"tasks", {(dir / "task").string()}}}},
                                      {"seeds", {0, 1, 2, 3, 4}}});
  auto r = sh("eval --config " + cfg.string() + " --out " + (dir / "out").string());
  CHECK(r.code == 0);
  CHECK(r.output.find("easy: accuracy 100.00 +- 0.00 % over 5 seed(s)") != std::string::npos);
  std::ifstream in(dir / "out" / "metrics.jsonl");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(json::parse(line).at("accuracy") == 1.0);
    ++rows;
  }
  CHECK(rows == 5);
}

TEST_CASE("pretrain, finetune and eval chain; reruns are byte-identical") {
  const auto dir = fresh_dir("chain");
  auto spec = harness::task_spec(8, "band", {"FZ", "CZ"}, 30, data::LabelRule::kBandArgmax, 2);
  spec.burn_in = 50;
  data::write_dataset(data::generate_synthetic(spec), dir / "task");
  json base = {{"model", small_model()},
               {"data", {{"synthetic", small_synthetic(2)},
                         {"checkpoint", (dir / "pre").string()},
                         {"finetune", (dir / "ft").string()},
                         {"tasks", {(dir / "task").string()}}}},
               {"train", {{"steps", 12}, {"batch_size", 4}, {"eval_every", 4},
                          {"eval_sequences", 8}, {"epochs", 1}, {"lr", 3e-3}}},
               {"seeds", {0, 1}}};
  const auto cfg = write_config(dir, base);
  const std::string c = " --config " + cfg.string();
  REQUIRE(sh("pretrain" + c + " --out " + (dir / "pre").string()).code == 0);
  REQUIRE(sh("finetune" + c + " --out " + (dir / "ft").string()).code == 0);
  REQUIRE(sh("eval" + c + " --out " + (dir / "ev").string()).code == 0);
  REQUIRE(fs::exists(dir / "pre" / "seed_1" / "checkpoint" / "index.json"));
  REQUIRE(fs::exists(dir / "ft" / "seed_1" / "graph_joint" / "index.json"));

  REQUIRE(sh("pretrain" + c + " --out " + (dir / "pre2").string()).code == 0);
  REQUIRE(sh("finetune" + c + " --out " + (dir / "ft2").string()).code == 0);
  REQUIRE(sh("eval" + c + " --out " + (dir / "ev2").string()).code == 0);
  for (const auto* f : {"metrics.jsonl", "metrics.csv"}) {
    CHECK(slurp(dir / "pre" / f) == slurp(dir / "pre2" / f));
    CHECK(slurp(dir / "pre" / "seed_0" / f) == slurp(dir / "pre2" / "seed_0" / f));
    CHECK(slurp(dir / "ft" / f) == slurp(dir / "ft2" / f));
    CHECK(slurp(dir / "ft" / "seed_1" / f) == slurp(dir / "ft2" / "seed_1" / f));
    CHECK(slurp(dir / "ev" / f) == slurp(dir / "ev2" / f));
  }
  CHECK(slurp(dir / "pre" / "seed_0" / "checkpoint" / "params.bin") ==
        slurp(dir / "pre2" / "seed_0" / "checkpoint" / "params.bin"));

  auto ins = sh("inspect " + (dir / "pre" / "seed_0" / "checkpoint").string());
  CHECK(ins.code == 0);
  CHECK(json::parse(ins.output).at("kind") == "checkpoint");
  ins = sh("inspect " + (dir / "ft").string());
  CHECK(json::parse(ins.output).at("kind") == "run");
}

TEST_CASE("scaling emits the grid with zero-token rows") {
  const auto dir = fresh_dir("scaling");
  json ladder = json::array();
  for (int h : {4, 8, 16}) {
    const json w = {{"hidden", h}, {"heads", 2}, {"head_size", h / 2}, {"intermediate", 2 * h},
                    {"layers", 1}};
    ladder.push_back({{"preset", "tiny"}, {"name", "h" + std::to_string(h)}, {"ete", w},
                      {"teg", w}});
  }
  json model = small_model();
  model["ladder"] = ladder;
  const auto cfg = write_config(
      dir, {{"model", model},
            {"data", {{"scaling", {{"corpus_electrodes", 3}, {"corpus_windows", 10},
                                   {"task_windows", 30}, {"task_electrodes", {"FZ", "CZ"}},
                                   {"task_classes", 2}}}}},
            {"train", {{"steps", 8}, {"batch_size", 4}, {"eval_every", 0}, {"eval_sequences", 8},
                       {"epochs", 1}, {"fractions", {0.0, 0.5, 1.0}}}},
            {"seeds", {0}}});
  REQUIRE(sh("scaling --config " + cfg.string() + " --out " + (dir / "a").string()).code == 0);
  REQUIRE(sh("scaling --config " + cfg.string() + " --out " + (dir / "b").string()).code == 0);
  const auto csv = slurp(dir / "a" / "scaling.csv");
  CHECK(csv == slurp(dir / "b" / "scaling.csv"));
  CHECK(slurp(dir / "a" / "scaling.dat") == slurp(dir / "b" / "scaling.dat"));
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "config,parameters,seed,fraction,tokens,loss,accuracy");
  int rows = 0, zero_token = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ++rows;
    if (line.find(",0,0,") != std::string::npos) ++zero_token;
  }
  CHECK(rows == 9);
  CHECK(zero_token == 3);
}
