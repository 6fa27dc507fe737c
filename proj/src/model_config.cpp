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

#include "eegpt/model_config.hpp"

#include <algorithm>

#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"

namespace eegpt {

namespace {

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw ConfigError(std::string(what) + " must be positive");
}

void check_heads(std::size_t hidden, std::size_t heads, std::size_t head_size,
                 const char* who) {
  if (hidden != heads * head_size) {
    throw ConfigError(std::string(who) + ": hidden " + std::to_string(hidden) + " != heads " +
                      std::to_string(heads) + " x head_size " + std::to_string(head_size));
  }
}

ModelConfig make(const char* name, std::size_t L, std::size_t K, std::size_t hs, std::size_t d,
                 std::size_t heads, std::size_t inter, std::size_t C = 256,
                 std::size_t max_len = 26) {
  ModelConfig m;
  m.name = name;
  m.ete = {L, d, heads, hs, inter, C, max_len};
  m.teg.layers = K;
  m.teg.hidden = d;
  m.teg.heads = heads;
  m.teg.head_size = hs;
  m.teg.intermediate = inter;
  m.teg.token_width = C;
  return m;
}

}  // namespace

void EteConfig::validate() const {
  require_positive(layers, "ete.layers");
  require_positive(hidden, "ete.hidden");
  require_positive(heads, "ete.heads");
  require_positive(head_size, "ete.head_size");
  require_positive(intermediate, "ete.intermediate");
  require_positive(token_width, "ete.token_width");
  if (max_len < 2) throw ConfigError("ete.max_len must be at least 2");
  check_heads(hidden, heads, head_size, "ete");
}

void TegConfig::validate() const {
  require_positive(layers, "teg.layers");
  require_positive(hidden, "teg.hidden");
  require_positive(heads, "teg.heads");
  require_positive(head_size, "teg.head_size");
  require_positive(intermediate, "teg.intermediate");
  require_positive(token_width, "teg.token_width");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw ConfigError("teg.leaky_slope must lie in [0, 1)");
  }
  check_heads(hidden, heads, head_size, "teg");
}

void ModelConfig::validate() const {
  ete.validate();
  teg.validate();
  if (ete.hidden != teg.hidden) {
    throw ConfigError("ete.hidden and teg.hidden differ (" + std::to_string(ete.hidden) +
                      " vs " + std::to_string(teg.hidden) + ")");
  }
  if (ete.token_width != teg.token_width) {
    throw ConfigError("ete.token_width and teg.token_width differ");
  }
}

ModelConfig preset(const std::string& name) {
  if (name == "base") return make("base", 3, 3, 32, 128, 4, 512);
  if (name == "large") return make("large", 9, 3, 32, 256, 8, 1024);
  if (name == "huge") return make("huge", 12, 4, 64, 896, 14, 3584);
  if (name == "giant") return make("giant", 20, 4, 64, 1792, 28, 7168);
  if (name == "tiny") return make("tiny", 2, 2, 16, 32, 2, 128);
  if (name == "micro") return make("micro", 2, 2, 4, 8, 2, 16, 6, 5);
  throw ConfigError("unknown model preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"base", "large", "huge", "giant", "tiny", "micro"};
}

std::size_t count_ete_parameters(const EteConfig& c) {
  const std::size_t d = c.hidden, C = c.token_width, I = c.intermediate;
  const std::size_t per_layer = 2 * d + 4 * d * d + 3 * d * I;
  return C * d + c.max_len * d + c.layers * per_layer + d + 2 * d * d + d * C;
}

std::size_t count_vocab_parameters(std::size_t token_width) { return kNumElectrodes * token_width; }

std::size_t count_teg_parameters(const TegConfig& c) {
  const std::size_t d = c.hidden, I = c.intermediate;
  const std::size_t per_layer = d + d * d + 2 * c.heads * c.head_size + d + 2 * d * I;
  return kNumElectrodes * d + c.token_width + c.layers * per_layer + d;
}

std::size_t count_parameters(const ModelConfig& c) {
  return count_ete_parameters(c.ete) + count_vocab_parameters(c.ete.token_width) +
         count_teg_parameters(c.teg);
}

void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError(context + ": unknown key '" + k + "'");
    }
  }
}

json to_json(const EteConfig& c) {
  return {{"layers", c.layers},       {"hidden", c.hidden},
          {"heads", c.heads},         {"head_size", c.head_size},
          {"intermediate", c.intermediate}, {"token_width", c.token_width},
          {"max_len", c.max_len}};
}

json to_json(const TegConfig& c) {
  return {{"layers", c.layers},       {"hidden", c.hidden},
          {"heads", c.heads},         {"head_size", c.head_size},
          {"intermediate", c.intermediate}, {"token_width", c.token_width},
          {"leaky_slope", c.leaky_slope}};
}

json to_json(const ModelConfig& c) {
  return {{"name", c.name}, {"ete", to_json(c.ete)}, {"teg", to_json(c.teg)}};
}

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

}  // namespace

EteConfig ete_config_from_json(const json& j, EteConfig c) {
  require_keys(j, {"layers", "hidden", "heads", "head_size", "intermediate", "token_width", "max_len"},
               "ete");
  read_opt(j, "layers", c.layers, "ete");
  read_opt(j, "hidden", c.hidden, "ete");
  read_opt(j, "heads", c.heads, "ete");
  read_opt(j, "head_size", c.head_size, "ete");
  read_opt(j, "intermediate", c.intermediate, "ete");
  read_opt(j, "token_width", c.token_width, "ete");
  read_opt(j, "max_len", c.max_len, "ete");
  c.validate();
  return c;
}

TegConfig teg_config_from_json(const json& j, TegConfig c) {
  require_keys(j, {"layers", "hidden", "heads", "head_size", "intermediate", "token_width",
                   "leaky_slope"},
               "teg");
  read_opt(j, "layers", c.layers, "teg");
  read_opt(j, "hidden", c.hidden, "teg");
  read_opt(j, "heads", c.heads, "teg");
  read_opt(j, "head_size", c.head_size, "teg");
  read_opt(j, "intermediate", c.intermediate, "teg");
  read_opt(j, "token_width", c.token_width, "teg");
  read_opt(j, "leaky_slope", c.leaky_slope, "teg");
  c.validate();
  return c;
}

ModelConfig model_config_from_json(const json& j) {
  require_keys(j, {"preset", "name", "ete", "teg"}, "model");
  std::string p = "tiny";
  read_opt(j, "preset", p, "model");
  ModelConfig m = preset(p);
  read_opt(j, "name", m.name, "model");
  if (j.contains("ete")) m.ete = ete_config_from_json(j.at("ete"), m.ete);
  if (j.contains("teg")) m.teg = teg_config_from_json(j.at("teg"), m.teg);
  m.validate();
  return m;
}

}  // namespace eegpt
