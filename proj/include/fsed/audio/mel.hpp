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

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsed/random.hpp"
#include "fsed/tensor.hpp"

namespace fsed {

/// 2-D log-mel array (n_mels x n_frames) tagged with its clip.
struct SpectrogramTensor {
  Tensor values;
  std::string clip_id;

  std::size_t n_mels() const { return values.dim(0); }
  std::size_t n_frames() const { return values.dim(1); }
};

struct MelConfig {
  int target_rate_hz = 16000;
  int n_mels = 128;
  int window_samples = 1024;
  int hop_samples = 512;
  double log_floor = 1e-10;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  // 0 means target_rate_hz / 2

  void validate() const {
    if (target_rate_hz <= 0) throw std::invalid_argument("MelConfig: target_rate_hz must be positive");
    if (n_mels < 1) throw std::invalid_argument("MelConfig: n_mels must be >= 1");
    if (window_samples < 2) throw std::invalid_argument("MelConfig: window_samples must be >= 2");
    if (hop_samples < 1 || hop_samples > window_samples) {
      throw std::invalid_argument("MelConfig: need 1 <= hop_samples <= window_samples");
    }
    if (!(log_floor > 0.0)) throw std::invalid_argument("MelConfig: log_floor must be > 0");
    const double top = effective_fmax();
    if (fmin_hz < 0.0 || !(top > fmin_hz) || top > target_rate_hz / 2.0) {
      throw std::invalid_argument("MelConfig: need 0 <= fmin < fmax <= rate/2");
    }
  }

  double effective_fmax() const {
    return fmax_hz > 0.0 ? fmax_hz : target_rate_hz / 2.0;
  }

  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "rate=" << target_rate_hz << ";n_mels=" << n_mels
       << ";window=" << window_samples << ";hop=" << hop_samples
       << ";floor=" << log_floor << ";fmin=" << fmin_hz
       << ";fmax=" << effective_fmax();
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }
};

/// Centered framing: the signal is padded by window/2 on both sides and
/// frames start every hop samples, giving 1 + floor(n / hop) frames.
inline std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg) {
  return 1 + n_samples / static_cast<std::size_t>(cfg.hop_samples);
}

/// Slaney-style mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz >= min_log_hz) return min_log_mel + std::log(hz / min_log_hz) / logstep;
  return hz / f_sp;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel >= min_log_mel) return min_log_hz * std::exp(logstep * (mel - min_log_mel));
  return f_sp * mel;
}

/// Center frequencies (Hz) of the n_mels triangular bands.
inline std::vector<double> mel_band_centers(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin_hz), hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    centers[static_cast<std::size_t>(m)] =
        mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg.n_mels + 1));
  }
  return centers;
}

/// Triangular filters with area normalization, (n_mels, window/2 + 1).
inline Tensor mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const std::size_t n_fft = static_cast<std::size_t>(cfg.window_samples);
  const std::size_t bins = n_fft / 2 + 1;
  const std::size_t n_mels = static_cast<std::size_t>(cfg.n_mels);
  const double lo = hz_to_mel(cfg.fmin_hz), hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(n_mels + 1));
  }
  Tensor fb({n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double enorm = 2.0 / (right - left);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.target_rate_hz / n_fft;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      fb.at(m, k) = std::max(0.0, std::min(up, down)) * enorm;
    }
  }
  return fb;
}

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

/// Reusable log-mel front end; holds the window and filterbank for one
/// configuration.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(MelConfig cfg)
      : cfg_(cfg),
        window_(hann_window(static_cast<std::size_t>(cfg.window_samples))),
        filterbank_(mel_filterbank(cfg)) {}

  const MelConfig& config() const { return cfg_; }
  const Tensor& filterbank() const { return filterbank_; }

  SpectrogramTensor operator()(std::span<const double> wave,
                               std::string clip_id = {}) const {
    const std::size_t n_fft = static_cast<std::size_t>(cfg_.window_samples);
    const std::size_t hop = static_cast<std::size_t>(cfg_.hop_samples);
    if (wave.size() < n_fft) {
      throw std::invalid_argument(
          "log_mel: waveform has " + std::to_string(wave.size()) +
          " samples, fewer than the window length " + std::to_string(n_fft));
    }
    const std::size_t frames = frame_count(wave.size(), cfg_);
    const std::size_t bins = n_fft / 2 + 1;
    const std::size_t n_mels = filterbank_.dim(0);
    const std::size_t pad = n_fft / 2;

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> frame(n_fft);
    std::vector<std::complex<double>> spectrum;
    std::vector<double> power(bins);
    SpectrogramTensor out{Tensor({n_mels, frames}), std::move(clip_id)};
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < n_fft; ++i) {
        const long src = static_cast<long>(t * hop + i) - static_cast<long>(pad);
        const double v = (src >= 0 && src < static_cast<long>(wave.size()))
                             ? wave[static_cast<std::size_t>(src)]
                             : 0.0;
        frame[i] = v * window_[i];
      }
      fft.fwd(spectrum, frame);
      for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(spectrum[k]);
      for (std::size_t m = 0; m < n_mels; ++m) {
        const double* w = filterbank_.data() + m * bins;
        double e = 0.0;
        for (std::size_t k = 0; k < bins; ++k) e += w[k] * power[k];
        out.values.at(m, t) = std::log(e + cfg_.log_floor);
      }
    }
    return out;
  }

 private:
  MelConfig cfg_;
  std::vector<double> window_;
  Tensor filterbank_;
};

inline SpectrogramTensor log_mel(std::span<const double> wave,
                                 const MelConfig& cfg,
                                 std::string clip_id = {}) {
  return LogMelExtractor(cfg)(wave, std::move(clip_id));
}

}  // namespace fsed
