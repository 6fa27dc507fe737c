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
/// \file dataio.hpp
///
/// Recordings, preprocessing into electrode-token samples, the seeded AR(2)
/// corpus generator and the EEGB on-disk container.
///
#ifndef EEGPT_DATAIO_HPP_
#define EEGPT_DATAIO_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eegpt/numkit.hpp"
#include "eegpt/rng.hpp"

namespace eegpt::data {

using nk::Matrix;

struct EegRecording {
  std::vector<std::string> electrode_names;
  int sample_rate = 0;
  Matrix signal;  // electrodes x samples, microvolts
  std::string subject_id;

  std::size_t num_electrodes() const { return electrode_names.size(); }
  std::size_t num_samples() const { return static_cast<std::size_t>(signal.cols()); }
  /// Throws VocabularyError / DataError when the invariants do not hold.
  void validate() const;
};

/// Window/token geometry. Defaults: 4 s windows at 256 Hz cut into 256-point
/// tokens at 0.875 overlap, i.e. 25 tokens with a 32-sample stride.
struct TokenProfile {
  int sample_rate = 256;
  double window_s = 4.0;
  std::size_t token_len = 256;
  double overlap = 0.875;

  std::size_t window_samples() const;
  /// Throws ConfigError unless token_len * (1 - overlap) is a positive integer.
  std::size_t stride() const;
  std::size_t tokens_per_window() const;
};

/// One segment: E electrodes x T tokens x C points, stored as an (E*T) x C
/// row-major matrix so electrode e occupies rows [e*T, (e+1)*T).
struct EegSample {
  std::vector<std::size_t> electrodes;  // vocabulary ids
  std::size_t num_tokens = 0;           // T
  Matrix tokens;
  std::optional<int> label;
  std::optional<std::string> task_id;
  std::string subject_id;

  std::size_t num_electrodes() const { return electrodes.size(); }
  std::size_t token_width() const { return static_cast<std::size_t>(tokens.cols()); }
  auto electrode_block(std::size_t e) const {
    return tokens.middleRows(static_cast<Eigen::Index>(e * num_tokens),
                             static_cast<Eigen::Index>(num_tokens));
  }
  auto electrode_block(std::size_t e) {
    return tokens.middleRows(static_cast<Eigen::Index>(e * num_tokens),
                             static_cast<Eigen::Index>(num_tokens));
  }
  /// Shape and id checks (unique ids, all inside the vocabulary).
  void validate() const;
};

/// z-score floor: blocks with a standard deviation below this map to zeros.
inline constexpr double kZscoreFloor = 1e-8;

/// Throws DataError unless each electrode block has |mean| < 1e-6 and a
/// standard deviation within 1e-6 of one, or is identically zero.
void require_normalized(const EegSample& sample);

struct Dataset {
  std::string name;
  std::optional<std::string> task_id;
  int sample_rate = 256;
  std::vector<std::string> electrode_names;
  std::optional<int> num_classes;
  std::vector<EegSample> samples;

  std::size_t num_tokens() const { return samples.empty() ? 0 : samples.front().num_tokens; }
  std::size_t token_width() const { return samples.empty() ? 0 : samples.front().token_width(); }
};

// -- preprocessing ------------------------------------------------------------------

/// Linear-interpolation resampling. Output length is floor(n * target / source);
/// positions past the last input sample extrapolate from the final two.
EegRecording resample(const EegRecording& rec, int target_hz);

/// Non-overlapping windows, each cut into overlapping tokens. Samples come back
/// unnormalised; a trailing partial window is dropped.
std::vector<EegSample> segment_and_tokenize(const EegRecording& rec,
                                            const TokenProfile& profile = {});

/// Per electrode, (x - mean) / std over the whole T x C block.
EegSample zscore(const EegSample& sample);

using FilterHook = std::function<EegRecording(const EegRecording&)>;

/// resample -> filter hook (identity by default) -> segment -> z-score.
std::vector<EegSample> preprocess(const EegRecording& rec, const TokenProfile& profile = {},
                                  const FilterHook& filter = {});

// -- synthetic corpus --------------------------------------------------------------

struct Ar2 {
  double phi1 = 0.0;
  double phi2 = 0.0;
  /// Roots of 1 - phi1 z - phi2 z^2 outside the unit circle.
  bool stationary() const;
  /// Yule-Walker lag-1 and lag-2 autocorrelations.
  double rho1() const;
  double rho2() const;
};

/// Resonant AR(2) with poles at radius r and frequency hz.
Ar2 resonant_ar2(double radius, double hz, double sample_rate);

enum class LabelRule {
  kNone,
  /// A burst lands in one of num_classes equal sub-windows; the label is the
  /// argmax of measured energy over those sub-windows.
  kEnergyArgmax,
  /// Amplitude ramps up or down across the window; label 1 when the second
  /// half carries more energy than the first.
  kEnergyTrend,
  /// A narrowband high-frequency component is added in one of num_classes
  /// sub-windows; the label is the argmax of measured first-difference
  /// energy over those sub-windows. Survives per-token amplitude normalisation.
  kBandArgmax,
};

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::string name = "synthetic";
  std::optional<std::string> task_id;
  std::vector<std::string> electrodes;
  std::size_t samples_per_electrode = 0;  // continuous recording length
  std::vector<Ar2> coefficients;          // one per electrode; empty = defaults
  double noise_std = 1.0;
  double initial_value = 0.0;  // x[-1] = x[-2]
  std::size_t burn_in = 0;
  LabelRule label_rule = LabelRule::kNone;
  int num_classes = 0;
  double burst_gain = 3.0;
  double band_hz = 32.0;   // kBandArgmax resonance
  double band_gain = 0.5;  // kBandArgmax std relative to the background
  std::size_t num_subjects = 10;
  TokenProfile profile;
};

/// Electrode-specific default coefficients: radius in [0.95, 0.985], resonance
/// in [4, 13] Hz, both keyed on the vocabulary id.
Ar2 default_ar2(std::size_t electrode_id, int sample_rate);

/// x[t] = phi1 x[t-1] + phi2 x[t-2] + noise_std * N(0,1).
std::vector<double> ar2_series(const Ar2& c, double noise_std, std::size_t n,
                               double initial_value, std::size_t burn_in, Rng& rng);

/// Continuous multi-electrode recording. Electrode streams use Rng(seed, id),
/// so a stream does not depend on which other electrodes are present.
EegRecording generate_recording(const SyntheticSpec& spec);

/// Recording -> modulated windows -> tokens -> z-score, plus labels and
/// subject ids. Throws ConfigError for non-stationary coefficients.
Dataset generate_synthetic(const SyntheticSpec& spec);

// -- splits -------------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// 8:1:1 partition. With subject ids the partition is over subjects (no subject
/// in two splits); otherwise over samples.
SplitIndices split_dataset(const Dataset& ds, std::uint64_t seed);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

// -- EEGB container ------------------------------------------------------------------

inline constexpr int kEegbVersion = 1;

struct DatasetManifest {
  int version = kEegbVersion;
  std::string name;
  int sample_rate = 0;
  std::vector<std::string> electrode_names;
  std::size_t num_samples = 0;
  std::optional<int> num_classes;
  std::string dtype = "f32le";
  std::vector<std::size_t> shape;  // E, T, C
  std::optional<std::string> task_id;
  std::vector<std::string> subject_ids;
};

DatasetManifest manifest_of(const Dataset& ds);
DatasetManifest read_manifest(const std::filesystem::path& dir);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace eegpt::data

#endif  // EEGPT_DATAIO_HPP_
