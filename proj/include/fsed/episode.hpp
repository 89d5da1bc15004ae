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
 * @file episode.hpp
 * @brief Seeded N-way K-shot episode sampling.
 *
 * Classes are drawn without replacement from the sorted class pool, then
 * each class contributes K support and Q query clips drawn without
 * replacement. Local label i is the i-th sampled class. Support and query
 * are both stored class-major (all items of label 0 first).
 *
 * Dump format, one block per episode:
 *
 *     episode seed=<u64> n_way=<N> k_shot=<K> queries=<Q>
 *     class <local> <global label>
 *     support <local> <clip_id>
 *     query <local> <clip_id>
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fsed/audio/mel.hpp"
#include "fsed/data/manifest.hpp"
#include "fsed/data/spectrogram_store.hpp"
#include "fsed/error.hpp"
#include "fsed/random.hpp"

namespace fsed {

struct TaskConfig {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t queries_per_class = 15;

  std::size_t support_size() const { return n_way * k_shot; }
  std::size_t query_size() const { return n_way * queries_per_class; }
  std::size_t clips_needed() const { return k_shot + queries_per_class; }

  void validate() const {
    if (n_way < 2) throw std::invalid_argument("n_way must be >= 2");
    if (k_shot < 1) throw std::invalid_argument("k_shot must be >= 1");
    if (queries_per_class < 1) throw std::invalid_argument("queries_per_class must be >= 1");
  }
};

/// Clip ids and local labels of one episode, without features.
struct EpisodePlan {
  std::uint64_t seed = 0;
  TaskConfig cfg;
  std::vector<std::string> class_map;  // local label -> global label
  std::vector<std::string> support_ids;
  std::vector<int> support_labels;
  std::vector<std::string> query_ids;
  std::vector<int> query_labels;
};

struct LabeledSpectrogram {
  SpectrogramTensor spec;
  int label = 0;
};

struct Episode {
  std::uint64_t seed = 0;
  TaskConfig cfg;
  std::vector<std::string> class_map;
  std::vector<LabeledSpectrogram> support;
  std::vector<LabeledSpectrogram> query;
  /// Set by query augmentation: (T, N) rows of mixed label distributions.
  std::optional<Tensor> query_soft_labels;

  /// (T, N) targets: the soft labels when present, otherwise one-hot.
  Tensor query_targets() const {
    if (query_soft_labels) return *query_soft_labels;
    Tensor y({query.size(), cfg.n_way});
    for (std::size_t i = 0; i < query.size(); ++i) {
      y.at(i, static_cast<std::size_t>(query[i].label)) = 1.0;
    }
    return y;
  }
  std::vector<int> query_labels() const {
    std::vector<int> out;
    out.reserve(query.size());
    for (const auto& q : query) out.push_back(q.label);
    return out;
  }
};

inline EpisodePlan plan_episode(const std::set<std::string>& classes,
                                const data::DatasetManifest& manifest,
                                const TaskConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (classes.size() < cfg.n_way) {
    throw SamplingError("episode needs " + std::to_string(cfg.n_way) +
                        " classes but the split has " + std::to_string(classes.size()));
  }
  const auto by_class = manifest.clips_by_class();
  Rng rng(seed);
  std::vector<std::string> pool(classes.begin(), classes.end());
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(cfg.n_way);

  EpisodePlan plan;
  plan.seed = seed;
  plan.cfg = cfg;
  plan.class_map = pool;
  std::vector<std::vector<std::string>> drawn(cfg.n_way);
  for (std::size_t c = 0; c < cfg.n_way; ++c) {
    auto it = by_class.find(pool[c]);
    const std::size_t have = it == by_class.end() ? 0 : it->second.size();
    if (have < cfg.clips_needed()) {
      throw SamplingError("class '" + pool[c] + "' has " + std::to_string(have) +
                          " clips; the episode needs " + std::to_string(cfg.clips_needed()));
    }
    std::vector<std::size_t> idx = it->second;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < cfg.clips_needed(); ++j) {
      drawn[c].push_back(manifest.entries[idx[j]].clip_id);
    }
  }
  for (std::size_t c = 0; c < cfg.n_way; ++c) {
    for (std::size_t j = 0; j < cfg.k_shot; ++j) {
      plan.support_ids.push_back(drawn[c][j]);
      plan.support_labels.push_back(static_cast<int>(c));
    }
  }
  for (std::size_t c = 0; c < cfg.n_way; ++c) {
    for (std::size_t j = cfg.k_shot; j < cfg.clips_needed(); ++j) {
      plan.query_ids.push_back(drawn[c][j]);
      plan.query_labels.push_back(static_cast<int>(c));
    }
  }
  return plan;
}

inline Episode materialize(const EpisodePlan& plan, const data::SpectrogramStore& store) {
  Episode ep;
  ep.seed = plan.seed;
  ep.cfg = plan.cfg;
  ep.class_map = plan.class_map;
  for (std::size_t i = 0; i < plan.support_ids.size(); ++i) {
    ep.support.push_back({store.get(plan.support_ids[i]), plan.support_labels[i]});
  }
  for (std::size_t i = 0; i < plan.query_ids.size(); ++i) {
    ep.query.push_back({store.get(plan.query_ids[i]), plan.query_labels[i]});
  }
  return ep;
}

inline Episode sample_episode(const std::set<std::string>& classes,
                              const data::DatasetManifest& manifest, const TaskConfig& cfg,
                              std::uint64_t seed, const data::SpectrogramStore& store) {
  return materialize(plan_episode(classes, manifest, cfg, seed), store);
}

inline void dump_episode(std::ostream& out, const EpisodePlan& plan) {
  out << "episode seed=" << plan.seed << " n_way=" << plan.cfg.n_way
      << " k_shot=" << plan.cfg.k_shot << " queries=" << plan.cfg.queries_per_class << '\n';
  for (std::size_t c = 0; c < plan.class_map.size(); ++c) {
    out << "class " << c << ' ' << plan.class_map[c] << '\n';
  }
  for (std::size_t i = 0; i < plan.support_ids.size(); ++i) {
    out << "support " << plan.support_labels[i] << ' ' << plan.support_ids[i] << '\n';
  }
  for (std::size_t i = 0; i < plan.query_ids.size(); ++i) {
    out << "query " << plan.query_labels[i] << ' ' << plan.query_ids[i] << '\n';
  }
}

}  // namespace fsed
