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

#include "eegpt/electrodes.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "eegpt/errors.hpp"

namespace eegpt {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

const std::unordered_map<std::string, std::size_t>& lookup_table() {
  static const auto table = [] {
    std::unordered_map<std::string, std::size_t> t;
    for (std::size_t i = 0; i < kElectrodeNames.size(); ++i) t.emplace(upper(kElectrodeNames[i]), i);
    return t;
  }();
  return table;
}

}  // namespace

std::optional<std::size_t> electrode_index(std::string_view name) {
  const auto& t = lookup_table();
  auto it = t.find(upper(name));
  if (it == t.end()) return std::nullopt;
  return it->second;
}

std::size_t require_electrode(std::string_view name) {
  if (auto id = electrode_index(name)) return *id;
  throw VocabularyError("unknown electrode '" + std::string(name) + "'");
}

std::vector<std::size_t> require_electrodes(const std::vector<std::string>& names) {
  std::vector<std::size_t> ids;
  ids.reserve(names.size());
  for (const auto& n : names) ids.push_back(require_electrode(n));
  return ids;
}

}  // namespace eegpt
