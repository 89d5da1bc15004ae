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
 * @file train.hpp
 * @brief Episodic training loop.
 *
 * Metrics log: one comma-separated row per epoch,
 *
 *     epoch,step,loss,val_acc,lr
 *
 * where loss is the epoch's mean training loss, step the number of updates
 * so far, val_acc empty when no validation ran, and lr the epoch's rate.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fsed/augment.hpp"
#include "fsed/checkpoint.hpp"
#include "fsed/data/split.hpp"
#include "fsed/eval.hpp"
#include "fsed/optim.hpp"

namespace fsed {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_epochs = 60;
  double lr_decay = 0.01;
  LrSchedule lr_schedule = LrSchedule::multiplicative;
  std::size_t lr_step_epochs = 20;
  std::size_t episodes_per_epoch = 100;
  std::size_t val_episodes = 100;
  TaskConfig task;
  bool use_augmentation = true;
  MaskSpec masks;
  MixupConfig mixup;
  bool mask_support = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("learning_rate must be finite and >= 0");
    }
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    task.validate();
    if (use_augmentation) mixup.validate();
  }

  double lr_at(std::size_t epoch) const {
    return learning_rate_at(lr_schedule, learning_rate, lr_decay, epoch, max_epochs, lr_step_epochs);
  }
};

/// One Adam update on one episode; returns the loss before the update.
/// Augmentation draws come from `aug_rng` and touch the query set only.
inline double training_step(FewShotModel& model, Adam& optimizer, const Episode& episode,
                            const TrainConfig& cfg, double lr, Rng& aug_rng) {
  const Episode ep = cfg.use_augmentation
                         ? augment_query_set(episode, cfg.masks, cfg.mixup, aug_rng, nullptr,
                                             cfg.mask_support)
                         : episode;
  model.parameters().zero_grad();
  ag::Var loss;
  try {
    const nn::EpisodeScores scores = model.forward(ep, true);
    loss = nn::episode_loss(scores, ep.query_targets());
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " (episode seed " + std::to_string(episode.seed) + ")");
  }
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss (episode seed " + std::to_string(episode.seed) + ")");
  }
  ag::backward(loss);
  optimizer.step(lr);
  return value;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> val_acc;
  double lr = 0.0;
};

struct TrainResult {
  std::string best_checkpoint;  // serialized model at the best validation epoch
  std::size_t best_epoch = 0;
  std::optional<double> best_val_acc;
  std::size_t steps = 0;
  std::vector<double> losses;   // every step
  std::vector<EpochMetrics> epochs;
};

inline std::string metrics_header() { return "epoch,step,loss,val_acc,lr"; }

inline std::string metrics_row(const EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << ',' << m.step << ',' << std::setprecision(10) << m.loss << ',';
  if (m.val_acc) os << *m.val_acc;
  os << ',' << m.lr;
  return os.str();
}

inline std::uint64_t train_episode_seed(std::uint64_t seed, std::size_t step) {
  return derive_seed(seed, "train-episode", step);
}

/// Episodic training on the train classes with per-epoch validation on the
/// val classes (skipped when there are fewer than N of them). The returned
/// checkpoint is the best validation epoch, or the last one without
/// validation. Rows are appended to `metrics` when given.
inline TrainResult train(FewShotModel& model, const data::DatasetManifest& manifest,
                         const data::SpectrogramStore& store, const data::ClassSplit& split,
                         const TrainConfig& cfg, std::ostream* metrics = nullptr) {
  cfg.validate();
  if (!split.disjoint()) throw std::invalid_argument("train: class split is not disjoint");
  if (split.train_classes.size() < cfg.task.n_way) {
    throw std::invalid_argument("train: split has " + std::to_string(split.train_classes.size()) +
                                " train classes; " + std::to_string(cfg.task.n_way) + " needed");
  }
  const auto by_class = manifest.clips_by_class();
  for (const auto& c : split.train_classes) {
    auto it = by_class.find(c);
    if (it == by_class.end() || it->second.size() < cfg.task.clips_needed()) {
      throw std::invalid_argument("train: class '" + c + "' has too few clips for " +
                                  std::to_string(cfg.task.clips_needed()) + " per episode");
    }
  }
  const bool validate = split.val_classes.size() >= cfg.task.n_way && cfg.val_episodes > 0;
  Adam optimizer(model.parameters());
  TrainResult result;
  if (metrics) *metrics << metrics_header() << '\n';
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < cfg.episodes_per_epoch; ++i) {
      const std::size_t step = result.steps;
      const Episode ep = sample_episode(split.train_classes, manifest, cfg.task,
                                        train_episode_seed(cfg.seed, step), store);
      Rng aug_rng(derive_seed(cfg.seed, "augment", step));
      const double loss = training_step(model, optimizer, ep, cfg, lr, aug_rng);
      result.losses.push_back(loss);
      loss_sum += loss;
      ++result.steps;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.step = result.steps;
    m.loss = cfg.episodes_per_epoch ? loss_sum / static_cast<double>(cfg.episodes_per_epoch) : 0.0;
    m.lr = lr;
    if (validate) {
      EvalOptions vo;
      vo.task = cfg.task;
      vo.n_episodes = cfg.val_episodes;
      vo.seed = derive_seed(cfg.seed, "validation");
      m.val_acc = evaluate(model, split.val_classes, manifest, store, vo).mean_accuracy;
    }
    const double score = validate ? *m.val_acc : static_cast<double>(epoch);
    if (score > best) {
      best = score;
      result.best_epoch = epoch;
      result.best_val_acc = m.val_acc;
      result.best_checkpoint = checkpoint_bytes(model, &optimizer);
    }
    if (metrics) *metrics << metrics_row(m) << '\n' << std::flush;
    result.epochs.push_back(m);
  }
  return result;
}

}  // namespace fsed
