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

#ifndef EEGPT_CHECKPOINT_HPP_
#define EEGPT_CHECKPOINT_HPP_

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "eegpt/numkit.hpp"

namespace eegpt::ckpt {

inline constexpr int kCheckpointVersion = 1;

/// Directory layout: index.json (format_version plus name -> shape, byte
/// offset, count), params.bin (little-endian f64, index order), config.json.
void save(const std::filesystem::path& dir, std::span<const nk::NamedTensor> tensors,
          const nlohmann::json& config);

nlohmann::json read_config(const std::filesystem::path& dir);

/// Every stored tensor, in index order, as fresh leaves.
std::vector<nk::NamedTensor> load_all(const std::filesystem::path& dir);

/// Overwrites the values of `targets` in place (names and shapes must match
/// stored entries). Stored tensors without a target are ignored unless
/// `exact` is set.
void load_into(const std::filesystem::path& dir, std::span<const nk::NamedTensor> targets,
               bool exact = false);

/// FNV-1a over the raw bytes of every value, in order. Used to prove that a
/// parameter set did not move.
std::uint64_t checksum(std::span<const nk::NamedTensor> tensors);

}  // namespace eegpt::ckpt

#endif  // EEGPT_CHECKPOINT_HPP_
