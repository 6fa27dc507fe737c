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

#include "eegpt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "eegpt/errors.hpp"
#include "eegpt/rng.hpp"

namespace eegpt::nk {

bool GradcheckReport::passed() const { return max_rel_error() < tolerance; }

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

const GradcheckEntry& GradcheckReport::worst() const {
  if (entries.empty()) throw ContractError("empty gradcheck report");
  return *std::max_element(entries.begin(), entries.end(),
                           [](const auto& a, const auto& b) {
                             return a.max_rel_error < b.max_rel_error;
                           });
}

namespace {

Vector projection_weights(std::size_t n) {
  Rng rng(0x67726164ULL, n);
  Vector w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.5, 1.5);
  return w;
}

Tensor scalarize(const Tensor& out) {
  if (out.size() == 1) return out;
  Tensor w(out.shape(), projection_weights(out.size()));
  return sum(mul(out, w));
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor()>& f,
                          std::span<const NamedTensor> inputs, double epsilon,
                          double tolerance) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw ContractError("gradcheck epsilon must lie in (0, 1e-3]");
  }
  std::vector<bool> saved_flags;
  for (const auto& in : inputs) {
    if (!in.tensor.is_leaf()) throw ContractError("gradcheck input '" + in.name + "' is not a leaf");
    saved_flags.push_back(in.tensor.requires_grad());
    in.tensor.node()->requires_grad = true;
    in.tensor.node()->grad.resize(0);
  }

  const Tensor base = scalarize(f());
  const double base_value = base.item();
  if (scalarize(f()).item() != base_value) {
    throw DeterminismError("gradcheck: two forward passes at the same point disagree");
  }
  backward(base);

  GradcheckReport report;
  report.tolerance = tolerance;
  report.epsilon = epsilon;
  for (const auto& in : inputs) {
    Tensor t = in.tensor;
    const Vector analytic = t.grad();
    Vector& v = t.mutable_values();
    GradcheckEntry entry{in.name, static_cast<std::size_t>(v.size()), 0.0, 0.0};
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + epsilon;
      const double plus = scalarize(f()).item();
      v[i] = saved - epsilon;
      const double minus = scalarize(f()).item();
      v[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), kGradcheckFloor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    report.entries.push_back(std::move(entry));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    inputs[k].tensor.node()->grad.resize(0);
    inputs[k].tensor.node()->requires_grad = saved_flags[k];
  }
  return report;
}

}  // namespace eegpt::nk
