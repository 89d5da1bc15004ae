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
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fsed/autograd.hpp"
#include "fsed/ops.hpp"
#include "fsed/random.hpp"

namespace fsed::nn {

using ag::BatchNormState;
using ag::Var;

/// Named trainable tensors and batch-norm buffers of one model. Names are
/// dotted paths such as `encoder.block0.conv.weight`; insertion order is the
/// canonical serialization order.
class ParameterSet {
 public:
  Var add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter '" + name + "'");
    index_[name] = params_.size();
    params_.emplace_back(name, Var(std::move(value), true));
    return params_.back().second;
  }

  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialised tensor.
  Var add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform_real(rng, -bound, bound);
    return add(name, std::move(t));
  }

  BatchNormState& add_batch_norm(const std::string& name, std::size_t channels) {
    if (bn_index_.count(name)) throw std::logic_error("duplicate buffer '" + name + "'");
    bn_index_[name] = bn_.size();
    bn_.emplace_back(name, BatchNormState(channels));
    return bn_.back().second;
  }

  const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
  std::deque<std::pair<std::string, BatchNormState>>& buffers() { return bn_; }
  const std::deque<std::pair<std::string, BatchNormState>>& buffers() const { return bn_; }

  Var& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return params_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  BatchNormState& buffer(const std::string& name) {
    auto it = bn_index_.find(name);
    if (it == bn_index_.end()) throw std::out_of_range("no buffer '" + name + "'");
    return bn_[it->second].second;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var>> params_;
  std::map<std::string, std::size_t> index_;
  std::deque<std::pair<std::string, BatchNormState>> bn_;
  std::map<std::string, std::size_t> bn_index_;
};

}  // namespace fsed::nn
