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
 * @file task_adaptive.hpp
 * @brief Task mask built from the support set.
 *
 *     o = mean_K relu(conv3x3(f(S)))                  (N, m2, w, h)
 *     p = softmax_m3(conv1x1(reshape(o)))             (1, m3, w, h)
 *     r(x) = conv3x3(f(x))                            (B, m3, w, h)
 *     masked(x) = p * r(x)                            broadcast over B
 *
 * The class maps are concatenated along channels in local-label order, so
 * the projector weight has N * m2 input channels and a model is tied to the
 * N it was built for.
 */
#pragma once

#include <sstream>
#include <string>

#include "fsed/error.hpp"
#include "fsed/nn/module.hpp"

namespace fsed::nn {

struct TaskAdaptiveConfig {
  bool enabled = true;
  std::size_t m2 = 64;           // TAE output channels
  std::size_t m3 = 64;           // projector output channels
  std::size_t reshaper_m3 = 64;  // reshaper output channels; must equal m3

  std::string canonical() const {
    std::ostringstream os;
    os << "enabled=" << enabled << ";m2=" << m2 << ";m3=" << m3
       << ";reshaper_m3=" << reshaper_m3;
    return os.str();
  }
};

class TaskAdaptive {
 public:
  TaskAdaptive() = default;

  TaskAdaptive(const TaskAdaptiveConfig& cfg, std::size_t m1, std::size_t n_way,
               ParameterSet& ps, Rng& rng, const std::string& prefix = "task_adaptive")
      : cfg_(cfg), n_way_(n_way) {
    if (cfg.m2 == 0 || cfg.m3 == 0) {
      throw std::invalid_argument("task-adaptive channel counts must be positive");
    }
    if (cfg.reshaper_m3 != cfg.m3) {
      throw std::invalid_argument("reshaper output channels (" + std::to_string(cfg.reshaper_m3) +
                                  ") must equal projector output channels (" +
                                  std::to_string(cfg.m3) + ")");
    }
    const std::size_t m2 = cfg.m2, m3 = cfg.m3;
    tae_w_ = ps.add_uniform(prefix + ".tae.weight", {m2, m1, 3, 3}, m1 * 9, rng);
    tae_b_ = ps.add_uniform(prefix + ".tae.bias", {m2}, m1 * 9, rng);
    proj_w_ = ps.add_uniform(prefix + ".projector.weight", {m3, n_way * m2, 1, 1}, n_way * m2, rng);
    proj_b_ = ps.add_uniform(prefix + ".projector.bias", {m3}, n_way * m2, rng);
    resh_w_ = ps.add_uniform(prefix + ".reshaper.weight", {m3, m1, 3, 3}, m1 * 9, rng);
    resh_b_ = ps.add_uniform(prefix + ".reshaper.bias", {m3}, m1 * 9, rng);
  }

  const TaskAdaptiveConfig& config() const { return cfg_; }
  std::size_t n_way() const { return n_way_; }
  const Var& reshaper_weight() const { return resh_w_; }

  /// Per-class commonality o (N, m2, w, h) from class-major support maps.
  Var tae(const Var& support_fm, std::size_t n_way, std::size_t k_shot) const {
    if (support_fm.value().rank() != 4 || support_fm.dim(0) != n_way * k_shot) {
      throw ShapeError("tae: support batch " + shape_string(support_fm.shape()) +
                       " is not N*K = " + std::to_string(n_way * k_shot));
    }
    Var h = ag::relu(ag::conv2d(support_fm, tae_w_, tae_b_, 1));
    return k_shot == 1 ? h : ag::group_mean(h, k_shot);
  }

  /// Task mask p (1, m3, w, h), softmax-normalized over m3.
  Var project(const Var& o) const {
    if (o.value().rank() != 4 || o.dim(0) != n_way_) {
      throw ShapeError("project: expected " + std::to_string(n_way_) + " class maps, got " +
                       shape_string(o.shape()));
    }
    Var stacked = ag::reshape(o, {1, o.dim(0) * o.dim(1), o.dim(2), o.dim(3)});
    return ag::channel_softmax(ag::conv2d(stacked, proj_w_, proj_b_, 0));
  }

  Var reshape_features(const Var& fm) const { return ag::conv2d(fm, resh_w_, resh_b_, 1); }

  Var mask(const Var& support_fm, std::size_t k_shot) const {
    return project(tae(support_fm, n_way_, k_shot));
  }

 private:
  TaskAdaptiveConfig cfg_;
  std::size_t n_way_ = 0;
  Var tae_w_, tae_b_, proj_w_, proj_b_, resh_w_, resh_b_;
};

/// p broadcast over the batch of reshaped features.
inline Var apply_task_mask(const Var& p, const Var& features) {
  return ag::mul_broadcast0(features, p);
}

}  // namespace fsed::nn
