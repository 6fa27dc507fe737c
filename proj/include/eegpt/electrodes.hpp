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

#ifndef EEGPT_ELECTRODES_HPP_
#define EEGPT_ELECTRODES_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eegpt {

inline constexpr std::size_t kNumElectrodes = 138;
inline constexpr int kElectrodeListVersion = 1;

/// Canonical electrode names. The position in this list is the vocabulary
/// index and the graph node id; it must never be reordered. Mirrors
/// resources/electrodes_v1.txt.
inline constexpr std::array<std::string_view, kNumElectrodes> kElectrodeNames{
    "PO12", "CCP2H", "FFC5H", "OI1", "PO7", "CPPZ",
    "TP7", "PO2", "FC3", "FTT7H", "PPO8", "CCP4H",
    "P11", "FCC5H", "FFC4H", "FP1", "CPP2H", "FFT7H",
    "P1", "I2", "AFF6H", "FZ", "PO4", "FCC2H",
    "F8", "FT9", "CP2", "AF3", "FCZ", "POO11H",
    "FPZ", "F3", "P8", "FC2", "F1", "CCP3H",
    "CP6", "PO1", "C1", "AFZ", "C3", "CB1",
    "FTT8H", "POO12H", "TP9", "I1", "FP2", "POO10H",
    "CPP1H", "CPP4H", "TTP8H", "AFF5H", "PO10", "POO9H",
    "POO3", "CP5", "PO3", "FC6", "FTT9H", "PPOZ",
    "TPP5H", "POO4", "CB2", "FT7", "CPZ", "CP1",
    "PPO1", "CP3", "CCP5H", "O2", "FCC1H", "CP4",
    "FT8", "T9", "PO5", "P2", "P5", "POZ",
    "FC1", "CPP3H", "C5", "P9", "P10", "PO6",
    "FFT8H", "CCP1H", "C2", "POOZ", "T7", "POO7",
    "FFC3H", "F6", "FCCZ", "TPP8H", "F7", "P4",
    "P3", "AF8", "PPO2", "AF4", "FFC2H", "FFC1H",
    "P6", "F2", "C6", "P12", "TP10", "CZ",
    "IZ", "CCP6H", "TP8", "PO11", "OI2", "FC5",
    "TTP7H", "CPP5H", "F5", "POO8", "CPP6H", "OZ",
    "PO9", "AF7", "PZ", "O1", "FC4", "PO8",
    "F4", "FCC3H", "T10", "P7", "FT10", "FCC4H",
    "FCC6H", "T8", "PPO7", "C4", "FFC6H", "FTT10H",
};

/// Case-insensitive lookup of a canonical name.
std::optional<std::size_t> electrode_index(std::string_view name);

/// Lookup that throws VocabularyError naming the offender.
std::size_t require_electrode(std::string_view name);

std::vector<std::size_t> require_electrodes(const std::vector<std::string>& names);

}  // namespace eegpt

#endif  // EEGPT_ELECTRODES_HPP_
