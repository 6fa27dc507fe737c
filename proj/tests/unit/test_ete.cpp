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

#include <cmath>
#include <filesystem>
#include <vector>

#include "eegpt/errors.hpp"
#include "eegpt/ete.hpp"
#include "eegpt/gradcheck.hpp"
#include "eegpt/model_config.hpp"

using namespace eegpt;
using namespace eegpt::ete;
using nk::Matrix;
using nk::Shape;
using nk::Tensor;
using nk::Vector;

namespace {

Tensor random_input(std::size_t rows, std::size_t cols, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(rows * cols));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return Tensor({rows, cols}, std::move(v));
}

void randomize(const EteModel& m, Rng& rng, double sd) {
  for (auto& p : m.named_parameters()) {
    Tensor t = p.tensor;
    for (auto& x : t.mutable_values()) x = sd * rng.normal();
  }
}

EteConfig micro() { return preset("micro").ete; }

// Scalar reference implementation, written with plain loops over
// std::vector so it shares no code with the tensor path.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  const std::size_t r = t.rank() == 1 ? 1 : t.dim(0), c = t.size() / r;
  Mat m(r, std::vector<double>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t.at(i * c + j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat o(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) o[i][j] += a[i][k] * b[k][j];
  return o;
}

Mat rms(const Mat& x, const Mat& g) {
  Mat o = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double ms = 0;
    for (double v : x[i]) ms += v * v;
    ms /= static_cast<double>(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j) o[i][j] = x[i][j] / std::sqrt(ms + 1e-6) * g[0][j];
  }
  return o;
}

Mat swiglu_ref(const Mat& x, const Mat& gate, const Mat& up, const Mat& down) {
  Mat a = mm(x, gate), b = mm(x, up);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] = a[i][j] / (1.0 + std::exp(-a[i][j])) * b[i][j];
  return mm(a, down);
}

Mat addm(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

// One sequence through the encoder, every attention score by hand.
std::pair<Mat, Mat> reference_forward(const EteModel& m, const Mat& seq, bool causal) {
  const auto& cfg = m.config();
  const std::size_t S = seq.size(), hs = cfg.head_size;
  Mat x = mm(seq, to_mat(m.in_proj));
  const Mat pos = to_mat(m.pos);
  for (std::size_t t = 0; t < S; ++t)
    for (std::size_t j = 0; j < cfg.hidden; ++j) x[t][j] += pos[t][j];
  for (const auto& b : m.blocks) {
    const Mat xn = rms(x, to_mat(b.norm1));
    const Mat q = mm(xn, to_mat(b.wq)), k = mm(xn, to_mat(b.wk)), v = mm(xn, to_mat(b.wv));
    Mat att(S, std::vector<double>(cfg.hidden, 0.0));
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      for (std::size_t t = 0; t < S; ++t) {
        std::vector<double> s(S, 0.0);
        double mx = -1e300;
        const std::size_t last = causal ? t : S - 1;
        for (std::size_t u = 0; u <= last; ++u) {
          for (std::size_t j = 0; j < hs; ++j) s[u] += q[t][h * hs + j] * k[u][h * hs + j];
          s[u] /= std::sqrt(static_cast<double>(hs));
          mx = std::max(mx, s[u]);
        }
        double z = 0;
        for (std::size_t u = 0; u <= last; ++u) z += std::exp(s[u] - mx);
        for (std::size_t u = 0; u <= last; ++u) {
          const double p = std::exp(s[u] - mx) / z;
          for (std::size_t j = 0; j < hs; ++j) att[t][h * hs + j] += p * v[u][h * hs + j];
        }
      }
    }
    x = addm(x, mm(att, to_mat(b.wo)));
    x = addm(x, swiglu_ref(rms(x, to_mat(b.norm2)), to_mat(b.ffn_gate), to_mat(b.ffn_up),
                           to_mat(b.ffn_down)));
  }
  Mat pred = swiglu_ref(rms(x, to_mat(m.norm_f)), to_mat(m.head_gate), to_mat(m.head_up),
                        to_mat(m.head_down));
  return {x, pred};
}

double max_diff(const Tensor& t, const Mat& m, std::size_t row0 = 0) {
  double d = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j)
      d = std::max(d, std::abs(t.at((row0 + i) * m[i].size() + j) - m[i][j]));
  return d;
}

}  // namespace

TEST_CASE("causal mask definition") {
  CHECK(causal_mask(1).values()[0] == 0.0);
  Matrix m = causal_mask(3).matrix();
  const double s = nk::kMaskSentinel;
  Matrix want(3, 3);
  want << 0, s, s, 0, 0, s, 0, 0, 0;
  CHECK(m == want);
  Rng rng(1);
  auto p = nk::softmax_lastdim(random_input(3, 3, rng), causal_mask(3));
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(std::abs(p.matrix().row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("single-head d=2 forward matches the scalar oracle") {
  EteConfig cfg{1, 2, 1, 2, 3, 2, 3};
  Rng rng(5);
  EteModel m(cfg, rng);
  randomize(m, rng, 0.7);
  auto seq = random_input(2, 2, rng);
  auto out = m.forward(seq, 2);
  auto [h, p] = reference_forward(m, to_mat(seq), true);
  CHECK(max_diff(out.hidden, h) < 1e-12);
  CHECK(max_diff(out.predictions, p) < 1e-12);
}

TEST_CASE("micro forward matches the scalar oracle, causal and bidirectional") {
  Rng rng(6);
  for (auto obj : {Objective::kAutoregressive, Objective::kMasked}) {
    EteModel m(micro(), rng, obj);
    randomize(m, rng, 0.5);
    auto seqs = random_input(10, 6, rng);  // two sequences of 5
    auto out = m.forward(seqs, 5);
    for (std::size_t b = 0; b < 2; ++b) {
      auto one = nk::rows(seqs, b * 5, 5);
      auto [h, p] = reference_forward(m, to_mat(one), obj == Objective::kAutoregressive);
      CHECK(max_diff(out.hidden, h, b * 5) < 1e-12);
      CHECK(max_diff(out.predictions, p, b * 5) < 1e-12);
    }
  }
}

TEST_CASE("zero attention and FFN outputs leave projected inputs plus positions") {
  Rng rng(7);
  EteModel m(micro(), rng);
  for (auto& b : m.blocks) {
    b.wo.mutable_values().setZero();
    b.ffn_down.mutable_values().setZero();
  }
  auto seq = random_input(5, 6, rng);
  auto out = m.forward(seq, 5);
  Matrix want = seq.matrix() * m.in_proj.matrix() + m.pos.matrix();
  CHECK((out.hidden.matrix() - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("causality is exact") {
  Rng rng(8);
  EteModel m(preset("tiny").ete, rng);
  randomize(m, rng, 0.1);
  auto seq = random_input(26, 256, rng);
  const auto base = m.forward(seq, 26);
  for (std::size_t tp : {1u, 7u, 25u}) {
    Vector v = seq.values();
    for (Eigen::Index c = 0; c < 256; ++c) v[static_cast<Eigen::Index>(tp * 256) + c] += rng.normal();
    auto out = m.forward(Tensor({26, 256}, v), 26);
    for (std::size_t t = 0; t < tp; ++t) {
      for (std::size_t c = 0; c < 256; ++c) {
        REQUIRE(out.predictions.at(t * 256 + c) == base.predictions.at(t * 256 + c));
      }
      for (std::size_t c = 0; c < 32; ++c) {
        REQUIRE(out.hidden.at(t * 32 + c) == base.hidden.at(t * 32 + c));
      }
    }
    CHECK(out.predictions.at(tp * 256) != base.predictions.at(tp * 256));
  }
}

TEST_CASE("length and contract errors") {
  Rng rng(9);
  EteModel m(micro(), rng);
  CHECK_THROWS_AS(m.forward(random_input(6, 6, rng), 6), LengthError);
  CHECK_THROWS_AS(m.forward(random_input(7, 6, rng), 5), LengthError);
  CHECK_THROWS_AS(m.ar_loss(random_input(3, 6, rng), 1), ContractError);
  CHECK_THROWS_AS(m.mae_forward_loss(random_input(5, 6, rng), 5, 0.5, rng), ContractError);
  EteModel mae(micro(), rng, Objective::kMasked);
  CHECK_THROWS_AS(mae.mae_loss_at(random_input(5, 6, rng), 5, {}, Metric::kL2), ContractError);
  CHECK_THROWS_AS(mae_mask_positions(4, 0.0, rng), ConfigError);
}

TEST_CASE("ar loss algebra") {
  // a copy-the-previous-token predictor on a constant sequence
  Vector v = Vector::Constant(5 * 6, 0.75);
  Tensor seq({5, 6}, v);
  CHECK(ar_loss_from_predictions(seq, seq, 5, Metric::kL2).item() == 0.0);
  CHECK(ar_loss_from_predictions(seq, seq, 5, Metric::kL1).item() == 0.0);
  CHECK(std::abs(ar_loss_from_predictions(seq, seq, 5, Metric::kCosine).item()) < 1e-15);

  Rng rng(10);
  auto x = random_input(5, 6, rng);
  auto zero = Tensor::zeros({5, 6});
  double want = x.matrix().bottomRows(4).squaredNorm() / 24.0;
  CHECK(std::abs(ar_loss_from_predictions(x, zero, 5, Metric::kL2).item() - want) < 1e-14);
}

TEST_CASE("ar loss matches a per-position scalar loop for every metric") {
  Rng rng(11);
  EteModel m(preset("tiny").ete, rng);
  auto seqs = random_input(3 * 26, 256, rng);
  const auto pred = m.forward(seqs, 26).predictions;
  for (auto metric : {Metric::kL2, Metric::kL1, Metric::kCosine}) {
    double total = 0;
    for (std::size_t b = 0; b < 3; ++b) {
      double per_seq = 0;
      for (std::size_t t = 1; t <= 25; ++t) {
        double l2 = 0, l1 = 0, dot = 0, np = 0, nx = 0;
        for (std::size_t c = 0; c < 256; ++c) {
          const double p = pred.at((b * 26 + t - 1) * 256 + c);
          const double x = seqs.at((b * 26 + t) * 256 + c);
          l2 += (p - x) * (p - x);
          l1 += std::abs(p - x);
          dot += p * x;
          np += p * p;
          nx += x * x;
        }
        per_seq += metric == Metric::kL2   ? l2 / 256
                   : metric == Metric::kL1 ? l1 / 256
                                           : 1.0 - dot / std::sqrt(np * nx);
      }
      total += per_seq / 25;
    }
    const double got = m.ar_loss(seqs, 26, metric).item();
    CHECK(std::abs(got - total / 3) < 1e-12);
  }
}

TEST_CASE("batch loss is the mean of per-sequence losses") {
  Rng rng(12);
  EteModel m(preset("tiny").ete, rng);
  auto seqs = random_input(4 * 26, 256, rng);
  double sum = 0;
  for (std::size_t b = 0; b < 4; ++b) sum += m.ar_loss(nk::rows(seqs, b * 26, 26), 26).item();
  CHECK(std::abs(m.ar_loss(seqs, 26).item() - sum / 4) < 1e-12);
}

TEST_CASE("swapping two signal tokens changes the loss") {
  int changed = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(100 + trial);
    EteModel m(preset("tiny").ete, rng);
    randomize(m, rng, 0.1);
    auto seq = random_input(26, 256, rng);
    const std::size_t i = 1 + rng.below(25);
    std::size_t j = 1 + rng.below(25);
    if (j == i) j = i % 25 + 1;
    Matrix sw = seq.matrix();
    sw.row(static_cast<Eigen::Index>(i)).swap(sw.row(static_cast<Eigen::Index>(j)));
    if (m.ar_loss(seq, 26).item() != m.ar_loss(Tensor::from_matrix(sw), 26).item()) ++changed;
  }
  CHECK(changed >= 38);
}

TEST_CASE("mae loss covers only masked positions") {
  Rng rng(13);
  EteModel m(micro(), rng, Objective::kMasked);
  randomize(m, rng, 0.5);
  auto seq = random_input(5, 6, rng);
  const std::size_t rows[] = {3};
  for (auto metric : {Metric::kL2, Metric::kL1, Metric::kCosine}) {
    Matrix masked_in = seq.matrix();
    masked_in.row(3) = m.mask_token->matrix().row(0);
    auto [h, p] = reference_forward(m, to_mat(Tensor::from_matrix(masked_in)), false);
    double want = 0, dot = 0, np = 0, nx = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      const double d = p[3][c] - seq.at(3 * 6 + c);
      want += metric == Metric::kL2 ? d * d / 6 : std::abs(d) / 6;
      dot += p[3][c] * seq.at(3 * 6 + c);
      np += p[3][c] * p[3][c];
      nx += seq.at(3 * 6 + c) * seq.at(3 * 6 + c);
    }
    if (metric == Metric::kCosine) want = 1.0 - dot / std::sqrt(np * nx);
    CHECK(std::abs(m.mae_loss_at(seq, 5, rows, metric).item() - want) < 1e-12);
  }

  // the only path from an unmasked target into the loss is through the input
  Tensor leaf({5, 6}, seq.values(), true);
  nk::backward(m.mae_loss_at(leaf, 5, rows, Metric::kL2));
  CHECK(leaf.grad().segment(3 * 6, 6).cwiseAbs().sum() > 0.0);

  Rng r1(77), r2(77);
  std::vector<std::size_t> m1, m2;
  auto batch = random_input(15, 6, rng);
  const double l1 = m.mae_forward_loss(batch, 5, 0.5, r1, Metric::kL2, &m1).item();
  const double l2 = m.mae_forward_loss(batch, 5, 0.5, r2, Metric::kL2, &m2).item();
  CHECK(m1 == m2);
  CHECK(l1 == l2);
  CHECK(m1.size() == 3 * 2);  // ceil(0.5 * 4) per sequence
  for (auto r : m1) CHECK(r % 5 != 0);
}

TEST_CASE("gradcheck on micro encoders, both objectives, all metrics") {
  for (auto obj : {Objective::kAutoregressive, Objective::kMasked}) {
    for (auto metric : {Metric::kL2, Metric::kL1, Metric::kCosine}) {
      Rng rng(20);
      EteModel m(micro(), rng, obj);
      randomize(m, rng, 0.4);
      auto seqs = random_input(10, 6, rng);
      const std::size_t rows[] = {2, 6, 9};
      auto params = m.named_parameters();
      auto f = [&] {
        return obj == Objective::kAutoregressive ? m.ar_loss(seqs, 5, metric)
                                                 : m.mae_loss_at(seqs, 5, rows, metric);
      };
      auto rep = nk::gradcheck(f, params, 1e-6, 1e-5);
      INFO(objective_name(obj), " ", metric_name(metric), " worst ", rep.worst().name, " ",
           rep.max_rel_error());
      CHECK(rep.passed());
    }
  }
}

TEST_CASE("parameter counts") {
  for (const auto& name : preset_names()) {
    auto cfg = preset(name);
    CHECK(cfg.ete.hidden == cfg.ete.heads * cfg.ete.head_size);
  }
  for (const char* name : {"micro", "tiny", "base"}) {
    Rng rng(1);
    auto cfg = preset(name);
    EteModel m(cfg.ete, rng);
    CHECK(m.parameter_count() == count_ete_parameters(cfg.ete));
    EteModel mae(cfg.ete, rng, Objective::kMasked);
    CHECK(mae.parameter_count() == count_ete_parameters(cfg.ete) + cfg.ete.token_width);
  }
  const std::pair<const char*, double> table[] = {
      {"base", 1.46e6}, {"large", 11.29e6}, {"huge", 183.8e6}, {"giant", 1.09e9}};
  for (auto [name, want] : table) {
    const double got = static_cast<double>(count_parameters(preset(name)));
    INFO(name, " ", got);
    CHECK(std::abs(got / want - 1.0) <= 0.10);
  }
  auto a = preset("base");
  auto b = a;
  b.ete.intermediate *= 2;
  b.teg.intermediate *= 2;
  const std::size_t d = a.ete.hidden, dI = a.ete.intermediate;
  CHECK(count_parameters(b) - count_parameters(a) ==
        a.ete.layers * 3 * d * dI + a.teg.layers * 2 * d * dI);

  EteConfig bad = a.ete;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(30);
  EteModel m(micro(), rng, Objective::kMasked);
  tok::ElectrodeVocabulary v(6, rng);
  auto dir = std::filesystem::temp_directory_path() / "eegpt_test_ete_ckpt";
  std::filesystem::remove_all(dir);
  save(dir, m, v);
  auto back = load(dir);
  CHECK(back.model.objective() == Objective::kMasked);
  auto p1 = m.named_parameters(), p2 = back.model.named_parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].name == p2[i].name);
    CHECK(p1[i].tensor.values() == p2[i].tensor.values());
  }
  CHECK(back.vocab.embeddings().values() == v.embeddings().values());
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load(dir), DataError);
}
