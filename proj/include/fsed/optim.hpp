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
#include <stdexcept>
#include <string>
#include <vector>

#include "fsed/nn/module.hpp"

namespace fsed {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over every parameter of a ParameterSet. Parameters that received
/// no gradient in a step keep their values and moments.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParameterSet& params, AdamConfig cfg = {}) : params_(&params), cfg_(cfg) {
    for (const auto& [name, v] : params.params()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  void step(double lr) {
    if (!params_) throw std::logic_error("Adam: no parameters bound");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& ps = params_->params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      nn::Var p = ps[i].second;
      const Tensor& g = p.grad();
      if (g.empty()) continue;
      Tensor& w = p.mutable_value();
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  nn::ParameterSet* params_ = nullptr;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

enum class LrSchedule { multiplicative, final_fraction, step };

inline std::string to_string(LrSchedule s) {
  switch (s) {
    case LrSchedule::multiplicative: return "multiplicative";
    case LrSchedule::final_fraction: return "final_fraction";
    case LrSchedule::step: return "step";
  }
  return "multiplicative";
}

inline LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "multiplicative") return LrSchedule::multiplicative;
  if (s == "final_fraction") return LrSchedule::final_fraction;
  if (s == "step") return LrSchedule::step;
  throw std::invalid_argument("lr schedule must be multiplicative, final_fraction or step, got '" +
                              s + "'");
}

/// Learning rate for a 0-based epoch.
///   multiplicative: lr0 * (1 - decay)^e
///   final_fraction: lr0 * decay^(e / (E - 1)), reaching lr0 * decay at the last epoch
///   step:           lr0 * decay^floor(e / step_epochs)
inline double learning_rate_at(LrSchedule kind, double lr0, double decay, std::size_t epoch,
                               std::size_t max_epochs, std::size_t step_epochs = 20) {
  const double e = static_cast<double>(epoch);
  switch (kind) {
    case LrSchedule::multiplicative:
      return lr0 * std::pow(1.0 - decay, e);
    case LrSchedule::final_fraction:
      if (max_epochs <= 1) return lr0;
      return lr0 * std::pow(decay, e / static_cast<double>(max_epochs - 1));
    case LrSchedule::step:
      return lr0 * std::pow(decay, std::floor(e / static_cast<double>(std::max<std::size_t>(step_epochs, 1))));
  }
  return lr0;
}

}  // namespace fsed
