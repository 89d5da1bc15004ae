// Copyright 2026 The fsed Authors.
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

/**
 * @file spectrogram_store.hpp
 * @brief In-memory clip lookup and the on-disk spectrogram cache.
 *
 * Cache container (little-endian), one file per clip:
 *
 *     offset  size  field
 *     0       8     magic "FSEDSPEC"
 *     8       4     version (1)
 *     12      4     dtype code (1 = float64)
 *     16      4     rank (2)
 *     20      8     n_mels
 *     28      8     n_frames
 *     36      4     clip_id byte length L
 *     40      L     clip_id (UTF-8)
 *     40+L    8*n   values, row-major (n_mels x n_frames)
 *
 * Files are named `<sanitized clip_id>.<16 hex digits>.spec`, where the hex
 * digits are the variant key hash (mel configuration plus preprocessing
 * variant), so one directory can hold several feature variants.
 */
#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>

#include "fsed/audio/mel.hpp"
#include "fsed/error.hpp"

namespace fsed::data {

inline constexpr char kSpecMagic[8] = {'F', 'S', 'E', 'D', 'S', 'P', 'E', 'C'};
inline constexpr std::uint32_t kSpecVersion = 1;
inline constexpr std::uint32_t kDtypeFloat64 = 1;

namespace detail {
template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ParseError("truncated container while reading " + what);
  }
  return v;
}
}  // namespace detail

inline std::string cache_file_name(const std::string& clip_id, std::uint64_t key_hash) {
  std::string safe;
  for (unsigned char c : clip_id) {
    safe += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(key_hash));
  return safe + "." + hex + ".spec";
}

inline void write_spectrogram(const std::filesystem::path& path, const SpectrogramTensor& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write spectrogram: " + path.string());
  out.write(kSpecMagic, 8);
  detail::put<std::uint32_t>(out, kSpecVersion);
  detail::put<std::uint32_t>(out, kDtypeFloat64);
  detail::put<std::uint32_t>(out, 2);
  detail::put<std::uint64_t>(out, s.n_mels());
  detail::put<std::uint64_t>(out, s.n_frames());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.clip_id.size()));
  out.write(s.clip_id.data(), static_cast<std::streamsize>(s.clip_id.size()));
  out.write(reinterpret_cast<const char*>(s.values.data()),
            static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  if (!out) throw IoError("failed writing spectrogram: " + path.string());
}

inline SpectrogramTensor read_spectrogram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open spectrogram: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kSpecMagic, 8) != 0) {
    throw ParseError("not a spectrogram container: " + path.string());
  }
  const auto version = detail::get<std::uint32_t>(in, "version");
  const auto dtype = detail::get<std::uint32_t>(in, "dtype");
  const auto rank = detail::get<std::uint32_t>(in, "rank");
  if (version != kSpecVersion || dtype != kDtypeFloat64 || rank != 2) {
    throw ParseError("unsupported spectrogram container layout: " + path.string());
  }
  const auto rows = detail::get<std::uint64_t>(in, "n_mels");
  const auto cols = detail::get<std::uint64_t>(in, "n_frames");
  const auto id_len = detail::get<std::uint32_t>(in, "clip_id length");
  std::string id(id_len, '\0');
  if (!in.read(id.data(), id_len)) throw ParseError("truncated clip_id in " + path.string());
  SpectrogramTensor s{Tensor({rows, cols}), std::move(id)};
  if (!in.read(reinterpret_cast<char*>(s.values.data()),
               static_cast<std::streamsize>(s.values.size() * sizeof(double)))) {
    throw ParseError("truncated values in " + path.string());
  }
  return s;
}

/// clip_id -> spectrogram lookup shared by samplers and evaluators.
class SpectrogramStore {
 public:
  void insert(SpectrogramTensor s) {
    std::string id = s.clip_id;
    clips_.insert_or_assign(std::move(id), std::move(s));
  }
  bool contains(const std::string& clip_id) const { return clips_.count(clip_id) > 0; }
  const SpectrogramTensor& get(const std::string& clip_id) const {
    auto it = clips_.find(clip_id);
    if (it == clips_.end()) {
      throw std::out_of_range("no spectrogram for clip '" + clip_id + "'");
    }
    return it->second;
  }
  std::size_t size() const { return clips_.size(); }

 private:
  std::unordered_map<std::string, SpectrogramTensor> clips_;
};

}  // namespace fsed::data
