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

#include <cmath>

#include "eegpt/cli.hpp"
#include "eegpt/errors.hpp"
#include "eegpt/teg.hpp"
#include "eegpt/tokenizer.hpp"

namespace eegpt::cli {

namespace {

using nk::NamedTensor;
using nk::Tensor;

Tensor random_tensor(nk::Shape shape, Rng& rng, double sd = 1.0) {
  nk::Vector v(static_cast<Eigen::Index>(nk::shape_numel(shape)));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

/// Moves parameters off their initial scale so every path carries a gradient
/// well above the relative-error floor: matrices ~ N(0, 1/fan_in), norm gains
/// near one, everything else ~ N(0, 0.5^2).
void perturb(const std::vector<NamedTensor>& params, Rng& rng) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const bool gain = p.name.find("norm") != std::string::npos;
    const double sd = t.rank() == 2 ? 1.0 / std::sqrt(static_cast<double>(t.rows())) : 0.5;
    for (auto& x : t.mutable_values()) x = gain ? 1.0 + 0.2 * rng.normal() : sd * rng.normal();
  }
}

/// x^2 with a backward that is off by a quarter. Negative control only.
Tensor faulty_square(const Tensor& a) {
  return nk::make_op(a.shape(), a.values().array().square().matrix(), "faulty_square", {a},
                     [](nk::Node& o) {
                       nk::Node& A = *o.inputs[0];
                       A.accumulate(2.5 * o.grad.cwiseProduct(A.value));
                     });
}

void add_group(std::vector<GradcheckGroup>& out, const std::string& label,
               const std::function<Tensor()>& f, const std::vector<NamedTensor>& in,
               double eps, double tol) {
  out.push_back({label, nk::gradcheck(f, in, eps, tol)});
}

void numkit_suite(std::vector<GradcheckGroup>& out, double eps, double tol) {
  using namespace nk;
  Rng rng(77);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 2}, rng);
  auto row = random_tensor({4}, rng);
  auto col = random_tensor({3, 1}, rng);
  auto col2 = random_tensor({2, 1}, rng);
  auto gain = random_tensor({4}, rng);
  auto big = random_tensor({6, 4}, rng);
  const std::vector<std::size_t> idx{4, 1, 3};
  const std::vector<int> labels{1, 0, 3};
  const auto mask = Tensor::from({4}, {0, kMaskSentinel, 0, 0});
  struct Case {
    const char* name;
    std::function<Tensor()> f;
    std::vector<NamedTensor> in;
  };
  const std::vector<Case> cases{
      {"matmul", [&] { return matmul(a, w); }, {{"a", a}, {"w", w}}},
      {"matmul_nt", [&] { return matmul_nt(a, b); }, {{"a", a}, {"b", b}}},
      {"transpose", [&] { return transpose(a); }, {{"a", a}}},
      {"add", [&] { return add(a, b); }, {{"a", a}, {"b", b}}},
      {"sub", [&] { return sub(a, b); }, {{"a", a}, {"b", b}}},
      {"mul", [&] { return mul(a, b); }, {{"a", a}, {"b", b}}},
      {"add_rowwise", [&] { return add_rowwise(a, row); }, {{"a", a}, {"row", row}}},
      {"affine", [&] { return affine(a, -1.5, 0.25); }, {{"a", a}}},
      {"square", [&] { return square(a); }, {{"a", a}}},
      {"abs", [&] { return nk::abs(a); }, {{"a", a}}},
      {"relu", [&] { return relu(a); }, {{"a", a}}},
      {"leaky_relu", [&] { return leaky_relu(a, 0.2); }, {{"a", a}}},
      {"silu", [&] { return silu(a); }, {{"a", a}}},
      {"sum", [&] { return sum(a); }, {{"a", a}}},
      {"mean", [&] { return mean(a); }, {{"a", a}}},
      {"mean_rows", [&] { return mean_rows(a); }, {{"a", a}}},
      {"softmax", [&] { return softmax_lastdim(a); }, {{"a", a}}},
      {"softmax_masked", [&] { return softmax_lastdim(a, mask); }, {{"a", a}}},
      {"rms_norm", [&] { return rms_norm(a, gain); }, {{"a", a}, {"gain", gain}}},
      {"outer_sum", [&] { return outer_sum(col, col2); }, {{"col", col}, {"row", col2}}},
      {"row_cosine", [&] { return row_cosine(a, b); }, {{"a", a}, {"b", b}}},
      {"cross_entropy", [&] { return cross_entropy(a, labels); }, {{"a", a}}},
      {"reshape", [&] { return reshape(a, {2, 6}); }, {{"a", a}}},
      {"block", [&] { return block(a, 1, 2, 1, 3); }, {{"a", a}}},
      {"concat_rows",
       [&] {
         const Tensor p[] = {a, b};
         return concat_rows(p);
       },
       {{"a", a}, {"b", b}}},
      {"concat_cols",
       [&] {
         const Tensor p[] = {a, b};
         return concat_cols(p);
       },
       {{"a", a}, {"b", b}}},
      {"gather_rows", [&] { return gather_rows(big, idx); }, {{"big", big}}},
      {"index_add_rows", [&] { return index_add_rows(big, idx, a); }, {{"big", big}, {"a", a}}},
      {"index_put_rows", [&] { return index_put_rows(big, idx, a); }, {{"big", big}, {"a", a}}},
  };
  for (const auto& c : cases) add_group(out, std::string("numkit.") + c.name, c.f, c.in, eps, tol);
}

// Short sequences keep the finite-difference sweep over every Tiny parameter
// inside the time budget; the parameter shapes are the full Tiny ones.
constexpr std::size_t kCheckTokens = 2;

void ete_suite(std::vector<GradcheckGroup>& out, double eps, double tol) {
  const auto cfg = preset("tiny").ete;
  const std::size_t S = kCheckTokens + 1, C = cfg.token_width;
  for (auto obj : {ete::Objective::kAutoregressive, ete::Objective::kMasked}) {
    for (auto metric : {ete::Metric::kL2, ete::Metric::kL1, ete::Metric::kCosine}) {
      Rng rng(20);
      ete::EteModel m(cfg, rng, obj);
      const auto params = m.named_parameters();
      perturb(params, rng);
      const auto seqs = random_tensor({2 * S, C}, rng);
      const std::size_t rows[] = {1, S + 2};
      auto f = [&] {
        return obj == ete::Objective::kAutoregressive ? m.ar_loss(seqs, S, metric)
                                                      : m.mae_loss_at(seqs, S, rows, metric);
      };
      const std::string label =
          "ete." + std::string(obj == ete::Objective::kAutoregressive ? "ar" : "mae") + "." +
          ete::metric_name(metric);
      add_group(out, label, f, params, eps, tol);
    }
  }
}

void teg_suite(std::vector<GradcheckGroup>& out, double eps, double tol) {
  const auto cfg = preset("tiny");
  Rng rng(12);
  ete::EteModel enc(cfg.ete, rng);
  perturb(enc.named_parameters(), rng);
  enc.set_trainable(false);
  teg::TegModel g(cfg.teg, rng);
  g.register_task("a", 3, rng);
  g.register_task("b", 2, rng);
  const auto params = g.named_parameters();
  perturb(params, rng);
  const std::size_t C = cfg.ete.token_width;
  data::EegSample s1;
  s1.electrodes = {0, 5, 9, 30};
  s1.num_tokens = kCheckTokens;
  s1.tokens = random_tensor({4 * kCheckTokens, C}, rng).matrix();
  data::EegSample s2;
  s2.electrodes = {5, 6};
  s2.num_tokens = kCheckTokens;
  s2.tokens = random_tensor({2 * kCheckTokens, C}, rng).matrix();
  const std::size_t S = kCheckTokens + 1;
  auto f = [&] {
    std::vector<teg::TegInput> batch;
    batch.push_back({teg::extract_electrode_repr(enc, tok::assemble_finetune(s1, g.special_token), S),
                     {s1.electrodes}, "a"});
    batch.push_back({teg::extract_electrode_repr(enc, tok::assemble_finetune(s2, g.special_token), S),
                     {s2.electrodes}, "b"});
    const auto logits = g.batch_forward(batch);
    const int labels[] = {2, 0};
    return teg::classification_loss(logits, labels);
  };
  add_group(out, "teg.mixed", f, params, eps, tol);
}

}  // namespace

std::vector<GradcheckGroup> run_gradcheck_suite(const std::string& scope, bool inject_fault,
                                                double epsilon, double tolerance) {
  if (scope != "numkit" && scope != "ete" && scope != "teg" && scope != "all") {
    throw ConfigError("gradcheck scope must be numkit, ete, teg or all (got '" + scope + "')");
  }
  std::vector<GradcheckGroup> out;
  if (scope == "numkit" || scope == "all") numkit_suite(out, epsilon, tolerance);
  if (scope == "ete" || scope == "all") ete_suite(out, epsilon, tolerance);
  if (scope == "teg" || scope == "all") teg_suite(out, epsilon, tolerance);
  if (inject_fault) {
    Rng rng(5);
    auto x = random_tensor({3, 4}, rng);
    add_group(out, "fault.faulty_square", [&] { return faulty_square(x); }, {{"x", x}}, epsilon,
              tolerance);
  }
  return out;
}

}  // namespace eegpt::cli
