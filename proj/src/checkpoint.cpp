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

#include "eegpt/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "eegpt/errors.hpp"

namespace eegpt::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;
using nk::NamedTensor;
using nk::Tensor;

namespace {

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

void put_f64(std::string& buf, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((u >> (8 * k)) & 0xFF));
}

double get_f64(const char* p) {
  std::uint64_t u = 0;
  for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return std::bit_cast<double>(u);
}

struct Entry {
  std::string name;
  nk::Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

std::vector<Entry> read_index(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint not found: " + dir.string());
  json j;
  try {
    j = json::parse(slurp(dir / "index.json"));
  } catch (const json::parse_error& e) {
    throw DataError("malformed " + (dir / "index.json").string() + ": " + e.what());
  }
  const int version = j.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  std::vector<Entry> out;
  for (const auto& t : j.at("tensors")) {
    Entry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<nk::Shape>();
    e.offset = t.at("offset").get<std::size_t>();
    e.count = nk::shape_numel(e.shape);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

void save(const fs::path& dir, std::span<const NamedTensor> tensors, const json& config) {
  fs::create_directories(dir);
  json index;
  index["format_version"] = kCheckpointVersion;
  index["tensors"] = json::array();
  std::string blob;
  for (const auto& t : tensors) {
    index["tensors"].push_back(
        {{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", blob.size()}});
    for (Eigen::Index i = 0; i < t.tensor.values().size(); ++i) put_f64(blob, t.tensor.values()[i]);
  }
  spill(dir / "params.bin", blob);
  spill(dir / "index.json", index.dump(2) + "\n");
  spill(dir / "config.json", config.dump(2) + "\n");
}

json read_config(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint not found: " + dir.string());
  try {
    return json::parse(slurp(dir / "config.json"));
  } catch (const json::parse_error& e) {
    throw DataError("malformed " + (dir / "config.json").string() + ": " + e.what());
  }
}

std::vector<NamedTensor> load_all(const fs::path& dir) {
  const auto index = read_index(dir);
  const std::string blob = slurp(dir / "params.bin");
  std::vector<NamedTensor> out;
  for (const auto& e : index) {
    if (e.offset + 8 * e.count > blob.size()) {
      throw TruncationError("params.bin truncated at '" + e.name + "': expected " +
                            std::to_string(e.offset + 8 * e.count) + " bytes, found " +
                            std::to_string(blob.size()));
    }
    nk::Vector v(static_cast<Eigen::Index>(e.count));
    for (std::size_t i = 0; i < e.count; ++i) v[static_cast<Eigen::Index>(i)] = get_f64(blob.data() + e.offset + 8 * i);
    out.push_back({e.name, Tensor(e.shape, std::move(v))});
  }
  return out;
}

void load_into(const fs::path& dir, std::span<const NamedTensor> targets, bool exact) {
  const auto stored = load_all(dir);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : stored) by_name[s.name] = &s.tensor;
  if (exact && stored.size() != targets.size()) {
    throw DataError("checkpoint " + dir.string() + " holds " + std::to_string(stored.size()) +
                    " tensors, expected " + std::to_string(targets.size()));
  }
  for (const auto& t : targets) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) {
      throw DataError("checkpoint " + dir.string() + " lacks tensor '" + t.name + "'");
    }
    if (it->second->shape() != t.tensor.shape()) {
      throw DataError("checkpoint tensor '" + t.name + "' has shape " +
                      nk::shape_str(it->second->shape()) + ", model expects " +
                      nk::shape_str(t.tensor.shape()));
    }
    Tensor target = t.tensor;
    target.mutable_values() = it->second->values();
  }
}

std::uint64_t checksum(std::span<const NamedTensor> tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    for (Eigen::Index i = 0; i < t.tensor.values().size(); ++i) {
      const auto u = std::bit_cast<std::uint64_t>(t.tensor.values()[i]);
      for (int k = 0; k < 8; ++k) {
        h ^= (u >> (8 * k)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace eegpt::ckpt
