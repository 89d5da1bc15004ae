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

#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsed/audio/mel.hpp"
#include "fsed/audio/noise.hpp"
#include "fsed/audio/resample.hpp"
#include "fsed/audio/wav.hpp"
#include "fsed/data/manifest.hpp"
#include "fsed/data/spectrogram_store.hpp"
#include "fsed/random.hpp"

namespace fsed::data {

enum class NoiseMode { clean, mixed };

inline std::string to_string(NoiseMode m) { return m == NoiseMode::clean ? "clean" : "mixed"; }

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "clean") return NoiseMode::clean;
  if (s == "mixed") return NoiseMode::mixed;
  throw std::invalid_argument("noise mode must be 'clean' or 'mixed', got '" + s + "'");
}

struct PrepareOptions {
  MelConfig mel;
  double clip_seconds = 5.0;
  NoiseMode noise = NoiseMode::clean;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;
  std::uint64_t seed = 0;

  std::size_t clip_samples() const {
    return static_cast<std::size_t>(std::llround(clip_seconds * mel.target_rate_hz));
  }

  /// Canonical description of everything that changes the cached features.
  std::string variant_key() const {
    std::ostringstream os;
    os.precision(17);
    os << mel.canonical() << ";clip=" << clip_seconds << ";noise=" << to_string(noise);
    if (noise == NoiseMode::mixed) {
      os << ";snr=" << snr_min_db << ".." << snr_max_db << ";seed=" << seed;
    }
    return os.str();
  }
  std::uint64_t variant_hash() const { return fnv1a(variant_key()); }
};

/// Scene recordings used to build the noise-mixed variant, already at the
/// target rate.
struct NoiseBank {
  std::vector<std::vector<double>> clips;

  static NoiseBank load(const DatasetManifest& manifest, int target_rate) {
    NoiseBank bank;
    for (const auto& e : manifest.entries) {
      audio::Waveform w = audio::read_wav(manifest.resolve(e).string());
      bank.clips.push_back(audio::resample(w.samples, w.sample_rate, target_rate));
    }
    if (bank.clips.empty()) throw ValidationError("noise bank is empty");
    return bank;
  }
};

/// Rate conversion, fixed-length fit, optional noise mixing and log-mel for
/// one clip. Noise draws come from a per-clip seed so clips can be processed
/// in any order.
inline SpectrogramTensor prepare_waveform(const audio::Waveform& wave,
                                          const std::string& clip_id,
                                          const PrepareOptions& opt,
                                          const LogMelExtractor& extractor,
                                          const NoiseBank* noise = nullptr) {
  std::vector<double> x =
      audio::resample(wave.samples, wave.sample_rate, opt.mel.target_rate_hz);
  x = audio::fit_length(x, opt.clip_samples());
  if (opt.noise == NoiseMode::mixed) {
    if (noise == nullptr || noise->clips.empty()) {
      throw std::invalid_argument("noise-mixed preparation needs a noise bank");
    }
    Rng rng(derive_seed(opt.seed, "noise:" + clip_id));
    const auto pick = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<long>(noise->clips.size()) - 1));
    const double snr = uniform_real(rng, opt.snr_min_db, opt.snr_max_db);
    const std::vector<double>& src = noise->clips[pick];
    std::vector<double> tiled(std::max(src.size(), x.size()));
    for (std::size_t i = 0; i < tiled.size(); ++i) tiled[i] = src[i % src.size()];
    x = audio::mix_noise(x, tiled, snr, rng).samples;
  }
  return extractor(x, clip_id);
}

/// Loads every manifest clip into a store, reading from and filling the
/// cache directory when one is given.
inline SpectrogramStore prepare_corpus(const DatasetManifest& manifest,
                                       const PrepareOptions& opt,
                                       const std::optional<std::filesystem::path>& cache_dir,
                                       const NoiseBank* noise = nullptr,
                                       std::size_t* computed = nullptr) {
  opt.mel.validate();
  if (cache_dir) std::filesystem::create_directories(*cache_dir);
  const LogMelExtractor extractor(opt.mel);
  const std::uint64_t key = opt.variant_hash();
  SpectrogramStore store;
  std::size_t fresh = 0;
  for (const auto& e : manifest.entries) {
    if (cache_dir) {
      const auto path = *cache_dir / cache_file_name(e.clip_id, key);
      if (std::filesystem::exists(path)) {
        store.insert(read_spectrogram(path));
        continue;
      }
    }
    const audio::Waveform w = audio::read_wav(manifest.resolve(e).string());
    SpectrogramTensor s = prepare_waveform(w, e.clip_id, opt, extractor, noise);
    ++fresh;
    if (cache_dir) write_spectrogram(*cache_dir / cache_file_name(e.clip_id, key), s);
    store.insert(std::move(s));
  }
  if (computed) *computed = fresh;
  return store;
}

}  // namespace fsed::data
