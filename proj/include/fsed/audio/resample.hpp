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
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsed::audio {

/// Output length of a rate conversion: round(n * dst / src), halves up.
inline std::size_t resampled_length(std::size_t n, int src_rate, int dst_rate) {
  const auto num = static_cast<unsigned long long>(n) *
                   static_cast<unsigned long long>(dst_rate);
  const auto den = static_cast<unsigned long long>(src_rate);
  return static_cast<std::size_t>((2 * num + den) / (2 * den));
}

/// Band-limited interpolation with a Kaiser-windowed sinc kernel.
///
/// The kernel is tabulated once per call at `oversample` points per zero
/// crossing and linearly interpolated. When downsampling, the cutoff is
/// lowered to the destination Nyquist frequency. Weights at every output
/// instant are renormalized to sum to one, so constant signals (including
/// near the edges) pass through unchanged.
inline std::vector<double> resample(std::span<const double> x, int src_rate,
                                    int dst_rate, int zero_crossings = 32,
                                    double kaiser_beta = 8.6,
                                    int oversample = 512) {
  if (src_rate <= 0 || dst_rate <= 0) {
    throw std::invalid_argument("resample: sample rates must be positive (got " +
                                std::to_string(src_rate) + " -> " +
                                std::to_string(dst_rate) + ")");
  }
  if (src_rate == dst_rate) return {x.begin(), x.end()};
  const std::size_t out_len = resampled_length(x.size(), src_rate, dst_rate);
  std::vector<double> y(out_len, 0.0);
  if (x.empty()) return y;

  const std::size_t table_len =
      static_cast<std::size_t>(zero_crossings) * oversample + 2;
  std::vector<double> table(table_len, 0.0);
  const double i0_beta = std::cyl_bessel_i(0.0, kaiser_beta);
  for (std::size_t i = 0; i < table_len; ++i) {
    const double v = static_cast<double>(i) / oversample;  // in zero crossings
    if (v >= zero_crossings) break;
    const double r = v / zero_crossings;
    const double win =
        std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
    const double sinc =
        v == 0.0 ? 1.0 : std::sin(std::numbers::pi * v) / (std::numbers::pi * v);
    table[i] = sinc * win;
  }
  auto kernel = [&](double v) {
    v = std::abs(v) * oversample;
    const auto i = static_cast<std::size_t>(v);
    if (i + 1 >= table_len) return 0.0;
    const double frac = v - static_cast<double>(i);
    return table[i] + frac * (table[i + 1] - table[i]);
  };

  const double ratio = static_cast<double>(src_rate) / dst_rate;
  const double cutoff = std::min(1.0, static_cast<double>(dst_rate) / src_rate);
  const double half_width = zero_crossings / cutoff;  // in input samples
  const long n = static_cast<long>(x.size());
  for (std::size_t i = 0; i < out_len; ++i) {
    const double t = static_cast<double>(i) * ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min(n - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0, wsum = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double wgt = kernel((t - static_cast<double>(j)) * cutoff);
      acc += wgt * x[static_cast<std::size_t>(j)];
      wsum += wgt;
    }
    y[i] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return y;
}

}  // namespace fsed::audio
