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

#include "eegpt/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eegpt/electrodes.hpp"
#include "eegpt/errors.hpp"

namespace eegpt::data {

namespace fs = std::filesystem;
using Index = Eigen::Index;

// -- recordings and samples ------------------------------------------------------------

void EegRecording::validate() const {
  if (sample_rate <= 0) throw DataError("recording sample rate must be positive");
  if (static_cast<std::size_t>(signal.rows()) != electrode_names.size()) {
    throw DataError("recording has " + std::to_string(signal.rows()) + " signal rows for " +
                    std::to_string(electrode_names.size()) + " electrodes");
  }
  std::set<std::size_t> seen;
  for (const auto& n : electrode_names) {
    if (!seen.insert(require_electrode(n)).second) {
      throw DataError("duplicate electrode '" + n + "' in recording");
    }
  }
}

void EegSample::validate() const {
  if (electrodes.empty()) throw DataError("sample without electrodes");
  if (static_cast<std::size_t>(tokens.rows()) != electrodes.size() * num_tokens) {
    throw DataError("sample token matrix has " + std::to_string(tokens.rows()) +
                    " rows, expected " + std::to_string(electrodes.size() * num_tokens));
  }
  std::set<std::size_t> seen;
  for (auto id : electrodes) {
    if (id >= kNumElectrodes) {
      throw VocabularyError("electrode id " + std::to_string(id) + " outside the vocabulary");
    }
    if (!seen.insert(id).second) throw DataError("duplicate electrode id in sample");
  }
}

void require_normalized(const EegSample& s) {
  for (std::size_t e = 0; e < s.num_electrodes(); ++e) {
    const auto b = s.electrode_block(e);
    if ((b.array() == 0.0).all()) continue;
    const double n = static_cast<double>(b.size());
    const double mu = b.sum() / n;
    const double sd = std::sqrt((b.array() - mu).square().sum() / n);
    if (std::abs(mu) >= 1e-6 || std::abs(sd - 1.0) >= 1e-6) {
      throw DataError("electrode block " + std::to_string(e) + " not z-scored (mean " +
                      std::to_string(mu) + ", std " + std::to_string(sd) + ")");
    }
  }
}

// -- token geometry --------------------------------------------------------------------

std::size_t TokenProfile::window_samples() const {
  const double w = window_s * sample_rate;
  const double r = std::round(w);
  if (w <= 0 || std::abs(w - r) > 1e-9) {
    throw ConfigError("window of " + std::to_string(window_s) + " s at " +
                      std::to_string(sample_rate) + " Hz is not a whole number of samples");
  }
  return static_cast<std::size_t>(r);
}

std::size_t TokenProfile::stride() const {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
  const double s = static_cast<double>(token_len) * (1.0 - overlap);
  const double r = std::round(s);
  if (r < 1.0 || std::abs(s - r) > 1e-9) {
    throw ConfigError("token stride " + std::to_string(s) + " is not a positive integer");
  }
  return static_cast<std::size_t>(r);
}

std::size_t TokenProfile::tokens_per_window() const {
  const std::size_t w = window_samples();
  const std::size_t s = stride();
  if (token_len == 0 || w < token_len) {
    throw ConfigError("window of " + std::to_string(w) + " samples shorter than a token");
  }
  return (w - token_len) / s + 1;
}

// -- preprocessing -----------------------------------------------------------------------

EegRecording resample(const EegRecording& rec, int target_hz) {
  if (target_hz <= 0) throw ConfigError("target rate must be positive");
  if (rec.signal.cols() == 0) throw DataError("cannot resample an empty signal");
  if (target_hz == rec.sample_rate) return rec;
  if (rec.signal.cols() < 2) throw DataError("resampling needs at least two samples");

  const std::size_t n = rec.num_samples();
  const std::size_t m = n * static_cast<std::size_t>(target_hz) /
                        static_cast<std::size_t>(rec.sample_rate);
  EegRecording out = rec;
  out.sample_rate = target_hz;
  out.signal.resize(rec.signal.rows(), static_cast<Index>(m));
  const double step = static_cast<double>(rec.sample_rate) / target_hz;
  for (std::size_t k = 0; k < m; ++k) {
    const double pos = static_cast<double>(k) * step;
    std::size_t i = static_cast<std::size_t>(std::floor(pos));
    if (i > n - 2) i = n - 2;  // extrapolate off the last segment
    const double frac = pos - static_cast<double>(i);
    const auto c = static_cast<Index>(k);
    out.signal.col(c) = rec.signal.col(static_cast<Index>(i)) +
                        frac * (rec.signal.col(static_cast<Index>(i + 1)) -
                                rec.signal.col(static_cast<Index>(i)));
  }
  return out;
}

std::vector<EegSample> segment_and_tokenize(const EegRecording& rec,
                                            const TokenProfile& profile) {
  rec.validate();
  if (rec.sample_rate != profile.sample_rate) {
    throw ConfigError("tokenizer expects " + std::to_string(profile.sample_rate) +
                      " Hz input, recording is " + std::to_string(rec.sample_rate) + " Hz");
  }
  const std::size_t W = profile.window_samples();
  const std::size_t S = profile.stride();
  const std::size_t L = profile.token_len;
  const std::size_t T = profile.tokens_per_window();
  const std::size_t E = rec.num_electrodes();
  const auto ids = require_electrodes(rec.electrode_names);

  std::vector<EegSample> out;
  const std::size_t windows = rec.num_samples() / W;
  out.reserve(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    EegSample s;
    s.electrodes = ids;
    s.num_tokens = T;
    s.subject_id = rec.subject_id;
    s.tokens.resize(static_cast<Index>(E * T), static_cast<Index>(L));
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t t = 0; t < T; ++t) {
        s.tokens.row(static_cast<Index>(e * T + t)) =
            rec.signal.row(static_cast<Index>(e)).segment(static_cast<Index>(w * W + t * S),
                                                          static_cast<Index>(L));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

EegSample zscore(const EegSample& sample) {
  EegSample out = sample;
  for (std::size_t e = 0; e < sample.num_electrodes(); ++e) {
    auto b = out.electrode_block(e);
    const double n = static_cast<double>(b.size());
    const double mu = b.sum() / n;
    const double sd = std::sqrt((b.array() - mu).square().sum() / n);
    if (sd < kZscoreFloor) {
      b.setZero();
    } else {
      b = (b.array() - mu) / sd;
    }
  }
  return out;
}

std::vector<EegSample> preprocess(const EegRecording& rec, const TokenProfile& profile,
                                  const FilterHook& filter) {
  EegRecording r = resample(rec, profile.sample_rate);
  if (filter) r = filter(r);
  auto samples = segment_and_tokenize(r, profile);
  for (auto& s : samples) {
    s = zscore(s);
    require_normalized(s);
  }
  return samples;
}

// -- synthetic corpus --------------------------------------------------------------------

bool Ar2::stationary() const {
  return std::abs(phi2) < 1.0 && phi2 + phi1 < 1.0 && phi2 - phi1 < 1.0;
}

double Ar2::rho1() const { return phi1 / (1.0 - phi2); }
double Ar2::rho2() const { return phi1 * rho1() + phi2; }

Ar2 resonant_ar2(double radius, double hz, double sample_rate) {
  return {2.0 * radius * std::cos(2.0 * std::numbers::pi * hz / sample_rate), -radius * radius};
}

Ar2 default_ar2(std::size_t electrode_id, int sample_rate) {
  // Golden-ratio spacing spreads neighbouring ids across the band.
  const double u = std::fmod(static_cast<double>(electrode_id) * 0.6180339887498949, 1.0);
  const double v = std::fmod(static_cast<double>(electrode_id) * 0.7548776662466927, 1.0);
  return resonant_ar2(0.95 + 0.035 * v, 4.0 + 9.0 * u, sample_rate);
}

std::vector<double> ar2_series(const Ar2& c, double noise_std, std::size_t n,
                               double initial_value, std::size_t burn_in, Rng& rng) {
  std::vector<double> x(n);
  double x1 = initial_value, x2 = initial_value;
  for (std::size_t t = 0; t < burn_in + n; ++t) {
    const double eps = noise_std == 0.0 ? 0.0 : noise_std * rng.normal();
    const double v = c.phi1 * x1 + c.phi2 * x2 + eps;
    x2 = x1;
    x1 = v;
    if (t >= burn_in) x[t - burn_in] = v;
  }
  return x;
}

namespace {

constexpr std::uint64_t kLabelStream = 0x4C4142454CULL;
constexpr std::uint64_t kBandStream = 0x42414E4400000000ULL;

void validate_spec(const SyntheticSpec& spec) {
  if (spec.electrodes.empty()) throw ConfigError("synthetic spec lists no electrodes");
  if (!spec.coefficients.empty() && spec.coefficients.size() != spec.electrodes.size()) {
    throw ConfigError("synthetic spec has " + std::to_string(spec.coefficients.size()) +
                      " coefficient pairs for " + std::to_string(spec.electrodes.size()) +
                      " electrodes");
  }
  for (std::size_t i = 0; i < spec.coefficients.size(); ++i) {
    if (!spec.coefficients[i].stationary()) {
      throw ConfigError("non-stationary coefficients for electrode " + spec.electrodes[i] +
                        " (phi1=" + std::to_string(spec.coefficients[i].phi1) +
                        ", phi2=" + std::to_string(spec.coefficients[i].phi2) + ")");
    }
  }
  if (spec.noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (spec.label_rule != LabelRule::kNone && spec.num_classes < 2) {
    throw ConfigError("a label rule needs at least two classes");
  }
  if (spec.label_rule == LabelRule::kEnergyTrend && spec.num_classes != 2) {
    throw ConfigError("the energy-trend rule has exactly two classes");
  }
  if (spec.num_subjects == 0) throw ConfigError("num_subjects must be positive");
  if (spec.label_rule == LabelRule::kBandArgmax &&
      !(spec.band_hz > 0.0 && 2.0 * spec.band_hz < spec.profile.sample_rate && spec.band_gain >= 0.0)) {
    throw ConfigError("band rule needs 0 < band_hz < sample_rate / 2 and band_gain >= 0");
  }
}

std::vector<double> envelope(LabelRule rule, int target, int classes, double gain,
                             std::size_t W) {
  std::vector<double> env(W, 1.0);
  if (rule == LabelRule::kEnergyArgmax) {
    const std::size_t sub = W / static_cast<std::size_t>(classes);
    for (std::size_t i = 0; i < sub; ++i) env[static_cast<std::size_t>(target) * sub + i] = gain;
  } else if (rule == LabelRule::kEnergyTrend) {
    for (std::size_t i = 0; i < W; ++i) {
      const double f = static_cast<double>(i) / static_cast<double>(W - 1);
      env[i] = target == 1 ? 1.0 + (gain - 1.0) * f : gain - (gain - 1.0) * f;
    }
  }
  return env;
}

int measured_label(LabelRule rule, int classes, const Matrix& raw) {
  Matrix window = raw;
  if (rule == LabelRule::kBandArgmax) {
    window = raw.rightCols(raw.cols() - 1) - raw.leftCols(raw.cols() - 1);
  }
  const std::size_t W = static_cast<std::size_t>(window.cols());
  if (rule == LabelRule::kEnergyArgmax || rule == LabelRule::kBandArgmax) {
    const std::size_t sub = W / static_cast<std::size_t>(classes);
    int best = 0;
    double best_e = -1.0;
    for (int k = 0; k < classes; ++k) {
      const double e =
          window.middleCols(static_cast<Index>(k * sub), static_cast<Index>(sub)).squaredNorm();
      if (e > best_e) {
        best_e = e;
        best = k;
      }
    }
    return best;
  }
  const auto half = static_cast<Index>(W / 2);
  return window.rightCols(half).squaredNorm() > window.leftCols(half).squaredNorm() ? 1 : 0;
}

}  // namespace

EegRecording generate_recording(const SyntheticSpec& spec) {
  validate_spec(spec);
  EegRecording rec;
  rec.electrode_names = spec.electrodes;
  rec.sample_rate = spec.profile.sample_rate;
  const auto ids = require_electrodes(spec.electrodes);
  rec.signal.resize(static_cast<Index>(ids.size()), static_cast<Index>(spec.samples_per_electrode));
  for (std::size_t e = 0; e < ids.size(); ++e) {
    const Ar2 c = spec.coefficients.empty() ? default_ar2(ids[e], rec.sample_rate)
                                            : spec.coefficients[e];
    if (!c.stationary()) {
      throw ConfigError("non-stationary coefficients for electrode " + spec.electrodes[e]);
    }
    Rng rng(spec.seed, ids[e]);
    const auto x = ar2_series(c, spec.noise_std, spec.samples_per_electrode, spec.initial_value,
                              spec.burn_in, rng);
    rec.signal.row(static_cast<Index>(e)) =
        Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Index>(x.size()));
  }
  rec.validate();
  return rec;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  EegRecording rec = generate_recording(spec);
  const std::size_t W = spec.profile.window_samples();
  const std::size_t windows = rec.num_samples() / W;
  if (windows == 0) {
    throw ConfigError("recording of " + std::to_string(rec.num_samples()) +
                      " samples is shorter than one window");
  }

  Matrix band;
  if (spec.label_rule == LabelRule::kBandArgmax) {
    const auto ids = require_electrodes(spec.electrodes);
    const Ar2 c = resonant_ar2(0.97, spec.band_hz, rec.sample_rate);
    band.resize(rec.signal.rows(), rec.signal.cols());
    for (std::size_t e = 0; e < ids.size(); ++e) {
      Rng rng(spec.seed, kBandStream ^ ids[e]);
      const auto x = ar2_series(c, 1.0, rec.num_samples(), 0.0, spec.burn_in, rng);
      auto row = band.row(static_cast<Index>(e));
      row = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Index>(x.size()));
      const auto bg = rec.signal.row(static_cast<Index>(e));
      const double bg_sd = std::sqrt((bg.array() - bg.mean()).square().mean());
      const double sd = std::sqrt((row.array() - row.mean()).square().mean());
      if (sd > 0.0) row *= spec.band_gain * bg_sd / sd;
    }
  }

  std::vector<int> labels(windows, -1);
  if (spec.label_rule != LabelRule::kNone) {
    Rng label_rng(spec.seed, kLabelStream);
    for (std::size_t w = 0; w < windows; ++w) {
      const int target = static_cast<int>(label_rng.below(static_cast<std::uint64_t>(spec.num_classes)));
      const auto env = envelope(spec.label_rule, target, spec.num_classes, spec.burst_gain, W);
      auto win = rec.signal.middleCols(static_cast<Index>(w * W), static_cast<Index>(W));
      if (spec.label_rule == LabelRule::kBandArgmax) {
        const std::size_t sub = W / static_cast<std::size_t>(spec.num_classes);
        const auto at = static_cast<Index>(w * W + static_cast<std::size_t>(target) * sub);
        win.middleCols(static_cast<Index>(static_cast<std::size_t>(target) * sub),
                       static_cast<Index>(sub)) += band.middleCols(at, static_cast<Index>(sub));
      } else {
        for (std::size_t i = 0; i < W; ++i) win.col(static_cast<Index>(i)) *= env[i];
      }
      labels[w] = measured_label(spec.label_rule, spec.num_classes, Matrix(win));
    }
  }

  Dataset ds;
  ds.name = spec.name;
  ds.task_id = spec.task_id;
  ds.sample_rate = rec.sample_rate;
  ds.electrode_names = spec.electrodes;
  if (spec.label_rule != LabelRule::kNone) ds.num_classes = spec.num_classes;
  ds.samples = segment_and_tokenize(rec, spec.profile);
  for (std::size_t w = 0; w < ds.samples.size(); ++w) {
    auto& s = ds.samples[w];
    s = zscore(s);
    require_normalized(s);
    if (labels[w] >= 0) s.label = labels[w];
    s.task_id = spec.task_id;
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%02zu", w * spec.num_subjects / windows);
    s.subject_id = buf;
  }
  return ds;
}

// -- splits -------------------------------------------------------------------------------

namespace {

void partition(std::size_t n, std::size_t& n_train, std::size_t& n_val) {
  n_val = std::max<std::size_t>(n >= 3 ? 1 : 0, static_cast<std::size_t>(std::lround(0.1 * n)));
  const std::size_t n_test = n_val;
  n_train = n - n_val - n_test;
}

}  // namespace

SplitIndices split_dataset(const Dataset& ds, std::uint64_t seed) {
  SplitIndices out;
  const bool by_subject =
      !ds.samples.empty() && std::all_of(ds.samples.begin(), ds.samples.end(),
                                         [](const EegSample& s) { return !s.subject_id.empty(); });
  Rng rng(seed, 0x53504C4954ULL);
  if (by_subject) {
    std::vector<std::string> subjects;
    for (const auto& s : ds.samples) subjects.push_back(s.subject_id);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    rng.shuffle(subjects);
    std::size_t n_train, n_val;
    partition(subjects.size(), n_train, n_val);
    std::set<std::string> train(subjects.begin(), subjects.begin() + static_cast<long>(n_train));
    std::set<std::string> val(subjects.begin() + static_cast<long>(n_train),
                              subjects.begin() + static_cast<long>(n_train + n_val));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& id = ds.samples[i].subject_id;
      (train.count(id) ? out.train : val.count(id) ? out.val : out.test).push_back(i);
    }
  } else {
    std::vector<std::size_t> order(ds.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t n_train, n_val;
    partition(order.size(), n_train, n_val);
    out.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
    out.val.assign(order.begin() + static_cast<long>(n_train),
                   order.begin() + static_cast<long>(n_train + n_val));
    out.test.assign(order.begin() + static_cast<long>(n_train + n_val), order.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
  }
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out = ds;
  out.samples.clear();
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(ds.samples.at(i));
  return out;
}

// -- EEGB container -------------------------------------------------------------------------

namespace {

using json = nlohmann::json;

void put_u32le(std::string& buf, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint32_t get_u32le(const char* p) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spill(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + p.string());
}

}  // namespace

DatasetManifest manifest_of(const Dataset& ds) {
  DatasetManifest m;
  m.name = ds.name;
  m.sample_rate = ds.sample_rate;
  m.electrode_names = ds.electrode_names;
  m.num_samples = ds.samples.size();
  m.num_classes = ds.num_classes;
  m.shape = {ds.electrode_names.size(), ds.num_tokens(), ds.token_width()};
  m.task_id = ds.task_id;
  const bool subjects = !ds.samples.empty() &&
                        std::all_of(ds.samples.begin(), ds.samples.end(),
                                    [](const EegSample& s) { return !s.subject_id.empty(); });
  if (subjects) {
    for (const auto& s : ds.samples) m.subject_ids.push_back(s.subject_id);
  }
  return m;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  const auto m = manifest_of(ds);
  const auto ids = require_electrodes(ds.electrode_names);
  for (const auto& s : ds.samples) {
    s.validate();
    if (s.electrodes != ids || s.num_tokens != m.shape[1] || s.token_width() != m.shape[2]) {
      throw DataError("sample shape or electrode order differs from the dataset header");
    }
  }
  fs::create_directories(dir);

  json j;
  j["version"] = m.version;
  j["name"] = m.name;
  j["sample_rate"] = m.sample_rate;
  j["electrode_names"] = m.electrode_names;
  j["num_samples"] = m.num_samples;
  j["num_classes"] = m.num_classes ? json(*m.num_classes) : json(nullptr);
  j["dtype"] = m.dtype;
  j["shape"] = m.shape;
  if (m.task_id) j["task_id"] = *m.task_id;
  if (!m.subject_ids.empty()) j["subject_ids"] = m.subject_ids;

  std::string data;
  data.reserve(m.num_samples * m.shape[0] * m.shape[1] * m.shape[2] * 4);
  for (const auto& s : ds.samples) {
    for (Index r = 0; r < s.tokens.rows(); ++r) {
      for (Index c = 0; c < s.tokens.cols(); ++c) {
        put_u32le(data, std::bit_cast<std::uint32_t>(static_cast<float>(s.tokens(r, c))));
      }
    }
  }
  spill(dir / "manifest.json", j.dump(2) + "\n");
  spill(dir / "data.bin", data);

  const bool labelled = !ds.samples.empty() &&
                        std::all_of(ds.samples.begin(), ds.samples.end(),
                                    [](const EegSample& s) { return s.label.has_value(); });
  std::error_code ec;
  fs::remove(dir / "labels.bin", ec);
  if (labelled) {
    std::string labels;
    for (const auto& s : ds.samples) put_u32le(labels, static_cast<std::uint32_t>(*s.label));
    spill(dir / "labels.bin", labels);
  }
}

DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path mp = dir / "manifest.json";
  if (!fs::exists(mp)) throw DataError("no manifest.json under " + dir.string());
  json j;
  try {
    j = json::parse(slurp(mp));
  } catch (const json::parse_error& e) {
    throw DataError("malformed manifest " + mp.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kEegbVersion) {
      throw VersionError("EEGB version " + std::to_string(m.version) + " unsupported (expected " +
                         std::to_string(kEegbVersion) + ")");
    }
    m.name = j.at("name").get<std::string>();
    m.sample_rate = j.at("sample_rate").get<int>();
    m.electrode_names = j.at("electrode_names").get<std::vector<std::string>>();
    m.num_samples = j.at("num_samples").get<std::size_t>();
    if (!j.at("num_classes").is_null()) m.num_classes = j.at("num_classes").get<int>();
    m.dtype = j.at("dtype").get<std::string>();
    m.shape = j.at("shape").get<std::vector<std::size_t>>();
    if (j.contains("task_id")) m.task_id = j.at("task_id").get<std::string>();
    if (j.contains("subject_ids")) m.subject_ids = j.at("subject_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError("manifest " + mp.string() + ": " + e.what());
  }
  if (m.dtype != "f32le") throw DataError("unsupported dtype '" + m.dtype + "'");
  if (m.shape.size() != 3 || m.shape[0] != m.electrode_names.size()) {
    throw DataError("manifest shape does not match its electrode list");
  }
  if (!m.subject_ids.empty() && m.subject_ids.size() != m.num_samples) {
    throw DataError("manifest lists " + std::to_string(m.subject_ids.size()) +
                    " subject ids for " + std::to_string(m.num_samples) + " samples");
  }
  for (const auto& n : m.electrode_names) require_electrode(n);
  return m;
}

Dataset read_dataset(const fs::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  const std::size_t E = m.shape[0], T = m.shape[1], C = m.shape[2];
  const std::size_t per_sample = E * T * C;
  const std::string data = slurp(dir / "data.bin");
  const std::size_t expected = m.num_samples * per_sample * 4;
  if (data.size() < expected) {
    throw TruncationError("data.bin truncated: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(data.size()));
  }
  if (data.size() > expected) {
    throw DataError("data.bin has " + std::to_string(data.size() - expected) +
                    " trailing bytes beyond the manifest");
  }
  std::string labels;
  const bool labelled = fs::exists(dir / "labels.bin");
  if (labelled) {
    labels = slurp(dir / "labels.bin");
    if (labels.size() != m.num_samples * 4) {
      throw TruncationError("labels.bin: expected " + std::to_string(m.num_samples * 4) +
                            " bytes, found " + std::to_string(labels.size()));
    }
  }

  Dataset ds;
  ds.name = m.name;
  ds.task_id = m.task_id;
  ds.sample_rate = m.sample_rate;
  ds.electrode_names = m.electrode_names;
  ds.num_classes = m.num_classes;
  const auto ids = require_electrodes(m.electrode_names);
  ds.samples.reserve(m.num_samples);
  const char* p = data.data();
  for (std::size_t i = 0; i < m.num_samples; ++i) {
    EegSample s;
    s.electrodes = ids;
    s.num_tokens = T;
    s.tokens.resize(static_cast<Index>(E * T), static_cast<Index>(C));
    for (Index r = 0; r < s.tokens.rows(); ++r) {
      for (Index c = 0; c < s.tokens.cols(); ++c, p += 4) {
        s.tokens(r, c) = static_cast<double>(std::bit_cast<float>(get_u32le(p)));
      }
    }
    if (labelled) {
      const auto y = get_u32le(labels.data() + 4 * i);
      if (m.num_classes && y >= static_cast<std::uint32_t>(*m.num_classes)) {
        throw DataError("label " + std::to_string(y) + " of sample " + std::to_string(i) +
                        " exceeds num_classes");
      }
      s.label = static_cast<int>(y);
    }
    s.task_id = m.task_id;
    if (!m.subject_ids.empty()) s.subject_id = m.subject_ids[i];
    s.validate();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace eegpt::data
