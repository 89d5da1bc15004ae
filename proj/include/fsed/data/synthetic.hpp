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
 * @file synthetic.hpp
 * @brief Generated tone-in-noise corpora for smoke tests and benchmarks.
 *
 * Each class owns a pitch. A clip holds a band-limited tone near that pitch
 * (a few partials with slight detuning and a smooth envelope) over a
 * broadband noise floor whose level and spectral tilt vary from clip to
 * clip by tens of decibels. The nuisance variation dominates raw spectrogram
 * distances, while the class evidence is local in frequency, so a learned
 * encoder has something to gain over pixel-space nearest neighbours.
 *
 * With `informative = false` every clip is noise only and labels carry no
 * information about content.
 */
#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fsed/audio/wav.hpp"
#include "fsed/data/manifest.hpp"
#include "fsed/random.hpp"

namespace fsed::data {

struct SyntheticCorpusSpec {
  std::size_t n_classes = 10;
  std::size_t clips_per_class = 40;
  int sample_rate = 16000;
  double clip_seconds = 1.0;
  double min_pitch_hz = 300.0;
  double max_pitch_hz = 5000.0;
  double noise_db_min = -50.0;   // noise floor level range (dBFS rms)
  double noise_db_max = -20.0;
  double tone_snr_db_min = 5.0;  // tone level over the noise floor
  double tone_snr_db_max = 25.0;
  double max_tilt = 0.9;         // one-pole colouring coefficient range
  bool informative = true;
  std::uint64_t seed = 0;
};

struct SyntheticClip {
  std::string clip_id;
  std::string label;
  std::vector<double> samples;
};

inline std::string synthetic_label(std::size_t c) {
  return "tone" + std::string(c < 10 ? "0" : "") + std::to_string(c);
}

inline std::vector<double> synthetic_pitches(const SyntheticCorpusSpec& spec) {
  Rng rng(derive_seed(spec.seed, "synthetic-pitches"));
  std::vector<double> out(spec.n_classes);
  const double span = std::log(spec.max_pitch_hz / spec.min_pitch_hz);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const double pos = (static_cast<double>(c) + uniform_real(rng, 0.25, 0.75)) /
                       static_cast<double>(spec.n_classes);
    out[c] = spec.min_pitch_hz * std::exp(span * pos);
  }
  return out;
}

inline std::vector<double> synthesize_clip(const SyntheticCorpusSpec& spec, double pitch_hz,
                                           Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(spec.clip_seconds * spec.sample_rate));
  const double sr = spec.sample_rate;
  std::vector<double> x(n, 0.0);

  // Coloured noise floor: white noise through a one-pole filter whose sign
  // picks low- or high-frequency emphasis.
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double tilt = uniform_real(rng, -spec.max_tilt, spec.max_tilt);
  std::vector<double> noise(n);
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    prev = tilt * prev + gauss(rng);
    noise[i] = prev;
  }
  double ss = 0.0;
  for (double v : noise) ss += v * v;
  const double noise_rms = std::sqrt(ss / static_cast<double>(n));
  const double noise_db = uniform_real(rng, spec.noise_db_min, spec.noise_db_max);
  const double noise_gain = std::pow(10.0, noise_db / 20.0) / noise_rms;
  for (std::size_t i = 0; i < n; ++i) x[i] = noise_gain * noise[i];
  if (!spec.informative || pitch_hz <= 0.0) return x;

  // Tone: three detuned partials around the class pitch, smooth envelope.
  const double tone_db = noise_db + uniform_real(rng, spec.tone_snr_db_min, spec.tone_snr_db_max);
  const double amp = std::pow(10.0, tone_db / 20.0) * std::sqrt(2.0 / 3.0);
  const double onset = uniform_real(rng, 0.0, 0.25) * static_cast<double>(n);
  const double length = uniform_real(rng, 0.6, 0.75) * static_cast<double>(n);
  const double ramp = 0.05 * static_cast<double>(n);
  for (int p = 0; p < 3; ++p) {
    const double f = pitch_hz * (1.0 + uniform_real(rng, -0.015, 0.015));
    const double phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) - onset;
      if (t < 0.0 || t > length) continue;
      double env = 1.0;
      if (t < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * t / ramp);
      if (length - t < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (length - t) / ramp);
      x[i] += amp * env * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / sr + phase);
    }
  }
  return x;
}

inline std::vector<SyntheticClip> generate_tone_corpus(const SyntheticCorpusSpec& spec) {
  const std::vector<double> pitches = synthetic_pitches(spec);
  std::vector<SyntheticClip> clips;
  clips.reserve(spec.n_classes * spec.clips_per_class);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t k = 0; k < spec.clips_per_class; ++k) {
      Rng rng(derive_seed(spec.seed, "synthetic-clip", c * 100003 + k));
      SyntheticClip clip;
      clip.label = synthetic_label(c);
      clip.clip_id = clip.label + "-" + std::to_string(k);
      clip.samples = synthesize_clip(spec, pitches[c], rng);
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

inline DatasetManifest synthetic_manifest(const std::vector<SyntheticClip>& clips, int sample_rate) {
  DatasetManifest m;
  m.sample_rate_hz = sample_rate;
  for (const auto& c : clips) {
    m.entries.push_back({c.clip_id, c.clip_id + ".wav", c.label,
                         static_cast<double>(c.samples.size()) / sample_rate});
  }
  return m;
}

/// Writes `<dir>/<clip_id>.wav` for every clip plus `<dir>/manifest.csv`.
inline DatasetManifest write_synthetic_corpus(const std::filesystem::path& dir,
                                              const std::vector<SyntheticClip>& clips,
                                              int sample_rate) {
  std::filesystem::create_directories(dir);
  for (const auto& c : clips) {
    audio::write_wav((dir / (c.clip_id + ".wav")).string(), c.samples, sample_rate);
  }
  DatasetManifest m = synthetic_manifest(clips, sample_rate);
  write_manifest(dir / "manifest.csv", m);
  m.base_dir = dir;
  return m;
}

}  // namespace fsed::data
