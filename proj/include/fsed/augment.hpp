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
 * @file augment.hpp
 * @brief Time/frequency masking and masked mixup of query sets.
 */
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsed/audio/mel.hpp"
#include "fsed/episode.hpp"
#include "fsed/random.hpp"

namespace fsed {

struct MaskSpec {
  std::size_t time_param = 24;  // widest time mask, in frames
  std::size_t freq_param = 36;  // widest frequency mask, in mel bins
  std::size_t num_masks = 2;
};

/// Frames [t0, t0 + t) and bins [f0, f0 + f) of one masking round.
struct MaskRect {
  std::size_t t0 = 0, t = 0, f0 = 0, f = 0;
};

struct MixupConfig {
  double alpha = 0.2;
  std::size_t num_masked_variants = 2;  // masked copies per query sample
  bool enabled = true;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("mixup alpha must be > 0");
    if (num_masked_variants < 2) {
      throw std::invalid_argument("num_masked_variants must be >= 2");
    }
  }
};

struct SoftLabel {
  std::vector<double> probabilities;

  static SoftLabel one_hot(std::size_t n, std::size_t i) {
    SoftLabel y{std::vector<double>(n, 0.0)};
    y.probabilities.at(i) = 1.0;
    return y;
  }
};

/// Zeroes `num_masks` time stripes and frequency stripes. Each round draws
/// t from {0..time_param} and t0 from [0, T - t), then f and f0 likewise;
/// a full-width stripe starts at 0.
inline SpectrogramTensor apply_masks(const SpectrogramTensor& spec, const MaskSpec& ms, Rng& rng,
                                     std::vector<MaskRect>* log = nullptr) {
  const std::size_t n_mels = spec.n_mels(), n_frames = spec.n_frames();
  if (ms.time_param > n_frames) {
    throw std::invalid_argument("time mask width " + std::to_string(ms.time_param) +
                                " exceeds " + std::to_string(n_frames) + " frames");
  }
  if (ms.freq_param > n_mels) {
    throw std::invalid_argument("frequency mask width " + std::to_string(ms.freq_param) +
                                " exceeds " + std::to_string(n_mels) + " mel bins");
  }
  auto start = [&rng](std::size_t extent, std::size_t width) -> std::size_t {
    if (width >= extent) return 0;
    return static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(extent - width) - 1));
  };
  SpectrogramTensor out = spec;
  for (std::size_t r = 0; r < ms.num_masks; ++r) {
    MaskRect m;
    m.t = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(ms.time_param)));
    m.t0 = start(n_frames, m.t);
    m.f = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(ms.freq_param)));
    m.f0 = start(n_mels, m.f);
    for (std::size_t i = 0; i < n_mels; ++i) {
      for (std::size_t j = m.t0; j < m.t0 + m.t; ++j) out.values.at(i, j) = 0.0;
    }
    for (std::size_t i = m.f0; i < m.f0 + m.f; ++i) {
      for (std::size_t j = 0; j < n_frames; ++j) out.values.at(i, j) = 0.0;
    }
    if (log) log->push_back(m);
  }
  return out;
}

struct MixupSample {
  SpectrogramTensor spec;
  SoftLabel label;
  double lambda = 1.0;
};

/// lambda * a + (1 - lambda) * b for both the features and the labels.
inline MixupSample mix_with_lambda(const SpectrogramTensor& xa, const SoftLabel& ya,
                                   const SpectrogramTensor& xb, const SoftLabel& yb,
                                   double lambda) {
  if (xa.values.shape() != xb.values.shape()) {
    throw std::invalid_argument("mixup: spectrogram shapes differ " +
                                shape_string(xa.values.shape()) + " vs " +
                                shape_string(xb.values.shape()));
  }
  if (ya.probabilities.size() != yb.probabilities.size()) {
    throw std::invalid_argument("mixup: label dimensions differ");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("mixup: lambda outside [0, 1]");
  }
  MixupSample out{xa, ya, lambda};
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < out.spec.values.size(); ++i) {
    out.spec.values[i] = lambda * xa.values[i] + mu * xb.values[i];
  }
  for (std::size_t c = 0; c < out.label.probabilities.size(); ++c) {
    out.label.probabilities[c] = lambda * ya.probabilities[c] + mu * yb.probabilities[c];
  }
  return out;
}

/// Mixup with lambda ~ Beta(alpha, alpha).
inline MixupSample masked_mixup(const SpectrogramTensor& xa, const SoftLabel& ya,
                                const SpectrogramTensor& xb, const SoftLabel& yb,
                                const MixupConfig& cfg, Rng& rng) {
  cfg.validate();
  return mix_with_lambda(xa, ya, xb, yb, sample_beta(rng, cfg.alpha, cfg.alpha));
}

/// One output query slot: pool indices, their source query indices, the
/// mixing weight and the mask rectangles of both variants.
struct AugmentRecord {
  std::size_t pool_a = 0, pool_b = 0;
  std::size_t source_a = 0, source_b = 0;
  double lambda = 1.0;
  std::vector<MaskRect> rects_a, rects_b;
};

/// Replaces every query sample with a mixup of two distinct entries of the
/// masked pool (M masked variants of each query sample). Support is left
/// alone unless `mask_support` is set, in which case it is masked but never
/// mixed. Disabled mixup returns the episode unchanged.
inline Episode augment_query_set(const Episode& episode, const MaskSpec& ms,
                                 const MixupConfig& mc, Rng& rng,
                                 std::vector<AugmentRecord>* log = nullptr,
                                 bool mask_support = false) {
  if (!mc.enabled) return episode;
  mc.validate();
  const std::size_t n_way = episode.cfg.n_way;
  const std::size_t t = episode.query.size();
  const std::size_t m = mc.num_masked_variants;
  std::vector<SpectrogramTensor> pool;
  std::vector<std::vector<MaskRect>> pool_rects;
  std::vector<std::size_t> pool_source;
  pool.reserve(t * m);
  for (std::size_t q = 0; q < t; ++q) {
    for (std::size_t v = 0; v < m; ++v) {
      std::vector<MaskRect> rects;
      pool.push_back(apply_masks(episode.query[q].spec, ms, rng, &rects));
      pool_rects.push_back(std::move(rects));
      pool_source.push_back(q);
    }
  }
  const Tensor targets = episode.query_targets();
  auto label_of = [&](std::size_t q) {
    SoftLabel y{std::vector<double>(n_way)};
    for (std::size_t c = 0; c < n_way; ++c) y.probabilities[c] = targets.at(q, c);
    return y;
  };

  Episode out = episode;
  Tensor soft({t, n_way});
  for (std::size_t i = 0; i < t; ++i) {
    const auto a = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(pool.size()) - 1));
    auto b = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(pool.size()) - 2));
    if (b >= a) ++b;
    const double lambda = sample_beta(rng, mc.alpha, mc.alpha);
    MixupSample mixed = mix_with_lambda(pool[a], label_of(pool_source[a]), pool[b],
                                        label_of(pool_source[b]), lambda);
    mixed.spec.clip_id = episode.query[i].spec.clip_id;
    out.query[i].spec = std::move(mixed.spec);
    for (std::size_t c = 0; c < n_way; ++c) soft.at(i, c) = mixed.label.probabilities[c];
    if (log) {
      log->push_back({a, b, pool_source[a], pool_source[b], lambda, pool_rects[a], pool_rects[b]});
    }
  }
  out.query_soft_labels = std::move(soft);
  if (mask_support) {
    for (auto& s : out.support) s.spec = apply_masks(s.spec, ms, rng);
  }
  return out;
}

}  // namespace fsed
