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
#include <cstdint>
#include <random>
#include <string_view>

namespace fsed {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Independent child seed for (stream, index) under a base seed. Every
/// random draw in the toolkit descends from one user seed through this.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ fnv1a(stream)) + index);
}

/// Uniform integer in [lo, hi] inclusive.
inline long uniform_int(Rng& rng, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

namespace detail {
// log of a Gamma(shape, 1) draw; small shapes use the boost
// Gamma(a) = Gamma(a + 1) * U^(1/a) in log space to avoid underflow.
inline double log_gamma_draw(Rng& rng, double shape) {
  if (shape >= 1.0) {
    return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
  }
  const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  while (u <= 0.0) u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return std::log(g) + std::log(u) / shape;
}
}  // namespace detail

/// Beta(a, b) draw, stable for shapes well below one.
inline double sample_beta(Rng& rng, double a, double b) {
  const double la = detail::log_gamma_draw(rng, a);
  const double lb = detail::log_gamma_draw(rng, b);
  // X / (X + Y) = 1 / (1 + exp(log Y - log X))
  return 1.0 / (1.0 + std::exp(lb - la));
}

}  // namespace fsed
