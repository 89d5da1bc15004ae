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
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "fsed/error.hpp"
#include "fsed/random.hpp"

namespace fsed::audio {

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

/// Zero-pads at the end or center-crops to exactly n samples.
inline std::vector<double> fit_length(std::span<const double> x, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (x.size() <= n) {
    std::copy(x.begin(), x.end(), out.begin());
  } else {
    const std::size_t start = (x.size() - n) / 2;
    std::copy(x.begin() + static_cast<long>(start),
              x.begin() + static_cast<long>(start + n), out.begin());
  }
  return out;
}

struct NoiseMix {
  std::vector<double> samples;
  double gain = 0.0;        // factor applied to the noise segment
  std::size_t offset = 0;   // start of the noise segment
};

/// clean + g * noise[offset : offset + len], with g chosen so that
/// 20 log10(rms(clean) / rms(g * segment)) = snr_db. A segment is drawn
/// uniformly; silent segments are redrawn. snr_db = +inf returns the clean
/// signal untouched.
inline NoiseMix mix_noise(std::span<const double> clean,
                          std::span<const double> noise, double snr_db,
                          Rng& rng, int max_attempts = 256) {
  if (noise.size() < clean.size()) {
    throw std::invalid_argument("mix_noise: noise shorter than clean signal");
  }
  NoiseMix result;
  result.samples.assign(clean.begin(), clean.end());
  if (std::isinf(snr_db) && snr_db > 0) return result;
  if (std::isnan(snr_db)) throw std::invalid_argument("mix_noise: snr_db is NaN");
  if (rms(noise) == 0.0) {
    throw ValidationError("mix_noise: noise clip is entirely silent");
  }
  const std::size_t span_len = clean.size();
  const std::size_t last = noise.size() - span_len;
  double seg_rms = 0.0;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    result.offset = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(last)));
    seg_rms = rms(noise.subspan(result.offset, span_len));
    if (seg_rms > 0.0) break;
  }
  if (!(seg_rms > 0.0)) {
    throw ValidationError("mix_noise: could not find a non-silent noise segment");
  }
  result.gain = rms(clean) / (seg_rms * std::pow(10.0, snr_db / 20.0));
  for (std::size_t i = 0; i < span_len; ++i) {
    result.samples[i] += result.gain * noise[result.offset + i];
  }
  return result;
}

}  // namespace fsed::audio
