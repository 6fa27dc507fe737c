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

#ifndef EEGPT_GRADCHECK_HPP_
#define EEGPT_GRADCHECK_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eegpt/numkit.hpp"

namespace eegpt::nk {

/// Denominator floor for the per-element relative error
///   |analytic - numeric| / max(|analytic|, |numeric|, kGradcheckFloor).
inline constexpr double kGradcheckFloor = 1e-3;

struct GradcheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 0.0;
  double epsilon = 0.0;

  bool passed() const;
  double max_rel_error() const;
  const GradcheckEntry& worst() const;
};

/// Compares reverse-mode gradients of `f` with central differences.
///
/// `f` rebuilds its graph from the current values of `inputs` on every call.
/// A non-scalar output is contracted against fixed pseudo-random weights so
/// every output element contributes. Inputs are perturbed in place and
/// restored. Two evaluations at the base point must agree bit-for-bit.
GradcheckReport gradcheck(const std::function<Tensor()>& f,
                          std::span<const NamedTensor> inputs, double epsilon = 1e-6,
                          double tolerance = 1e-5);

}  // namespace eegpt::nk

#endif  // EEGPT_GRADCHECK_HPP_
