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

///
/// \file model_config.hpp
///
/// Encoder and graph configurations, the named size presets and the
/// closed-form parameter count.
///
#ifndef EEGPT_MODEL_CONFIG_HPP_
#define EEGPT_MODEL_CONFIG_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace eegpt {

using nlohmann::json;

struct EteConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t heads = 2;
  std::size_t head_size = 16;
  std::size_t intermediate = 128;
  std::size_t token_width = 256;  // C
  std::size_t max_len = 26;       // T + 1

  /// ConfigError unless hidden == heads * head_size and all extents are positive.
  void validate() const;
};

struct TegConfig {
  std::size_t layers = 2;  // K
  std::size_t hidden = 32;
  std::size_t heads = 2;
  std::size_t head_size = 16;
  std::size_t intermediate = 128;
  std::size_t token_width = 256;  // width of the special token c
  double leaky_slope = 0.2;

  void validate() const;
};

struct ModelConfig {
  std::string name = "tiny";
  EteConfig ete;
  TegConfig teg;

  void validate() const;
};

/// base, large, huge, giant (the four published sizes), tiny (desk default)
/// and micro (gradient-check scale).
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::size_t count_ete_parameters(const EteConfig& c);
std::size_t count_vocab_parameters(std::size_t token_width);
/// Excludes task heads, which depend on the registered tasks.
std::size_t count_teg_parameters(const TegConfig& c);
/// Encoder + electrode vocabulary + graph.
std::size_t count_parameters(const ModelConfig& c);

/// Throws ConfigError when `j` is not an object or holds a key outside `allowed`.
void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& context);

json to_json(const EteConfig& c);
json to_json(const TegConfig& c);
json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
EteConfig ete_config_from_json(const json& j, EteConfig base = {});
TegConfig teg_config_from_json(const json& j, TegConfig base = {});
/// Accepts {"preset": name} with optional "ete"/"teg" overrides.
ModelConfig model_config_from_json(const json& j);

}  // namespace eegpt

#endif  // EEGPT_MODEL_CONFIG_HPP_
