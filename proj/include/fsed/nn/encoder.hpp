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
 * @file encoder.hpp
 * @brief Convolutional feature encoder with channel and temporal gating.
 *
 * Input is (B, 1, n_mels, n_frames). Every block runs
 *
 *     conv3x3 -> batch norm -> ReLU -> max pool -> channel gate -> frame gate
 *
 * The channel gate is global average pooling, a bottleneck of two dense
 * layers (reduction r) and a sigmoid. The frame gate averages over channels
 * and mel bins, runs a 1-D convolution along time and a sigmoid.
 */
#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "fsed/error.hpp"
#include "fsed/nn/module.hpp"

namespace fsed::nn {

struct ConvBlockSpec {
  std::size_t out_channels = 128;
  std::size_t pool = 2;
};

struct EncoderConfig {
  std::vector<ConvBlockSpec> blocks{{128, 2}, {128, 2}, {128, 2}};
  std::size_t kernel = 3;
  bool attention = true;
  std::size_t reduction = 8;
  std::size_t temporal_kernel = 5;

  /// Three 128-channel blocks with 2x2 pooling.
  static EncoderConfig three_block_preset() { return EncoderConfig{}; }

  /// Five blocks whose pools shrink a 128 x 157 input to a 2 x 2 map.
  static EncoderConfig five_block_preset() {
    EncoderConfig c;
    c.blocks = {{128, 4}, {128, 4}, {128, 2}, {128, 2}, {128, 1}};
    return c;
  }

  static EncoderConfig uniform(std::size_t n_blocks, std::size_t channels, std::size_t pool = 2) {
    EncoderConfig c;
    c.blocks.assign(n_blocks, ConvBlockSpec{channels, pool});
    return c;
  }

  void validate() const {
    if (blocks.empty()) throw std::invalid_argument("encoder needs at least one block");
    for (const auto& b : blocks) {
      if (b.out_channels == 0 || b.pool == 0) {
        throw std::invalid_argument("encoder block channels and pool must be positive");
      }
    }
    if (kernel % 2 == 0 || temporal_kernel % 2 == 0) {
      throw std::invalid_argument("encoder kernels must be odd");
    }
    if (reduction == 0) throw std::invalid_argument("attention reduction must be positive");
  }

  std::size_t out_channels() const { return blocks.back().out_channels; }

  /// (channels, height, width) after all blocks, or ShapeError.
  Shape output_shape(std::size_t height, std::size_t width) const {
    for (const auto& b : blocks) {
      height /= b.pool;
      width /= b.pool;
      if (height == 0 || width == 0) {
        throw ShapeError("encoder: input too small for cumulative pooling");
      }
    }
    return {out_channels(), height, width};
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "blocks=";
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      os << (i ? "," : "") << blocks[i].out_channels << "/" << blocks[i].pool;
    }
    os << ";kernel=" << kernel << ";attention=" << attention << ";reduction=" << reduction
       << ";temporal_kernel=" << temporal_kernel;
    return os.str();
  }
};

struct ChannelAttentionParams {
  Var fc1_w, fc1_b, fc2_w, fc2_b;
};

struct TemporalAttentionParams {
  Var kernel, bias;
};

inline Var channel_gates(const Var& fm, const ChannelAttentionParams& p) {
  Var z = ag::spatial_mean(fm);
  z = ag::relu(ag::linear(z, p.fc1_w, p.fc1_b));
  return ag::sigmoid(ag::linear(z, p.fc2_w, p.fc2_b));
}

inline Var channel_attention(const Var& fm, const ChannelAttentionParams& p) {
  return ag::scale_channels(fm, channel_gates(fm, p));
}

inline Var temporal_gates(const Var& fm, const TemporalAttentionParams& p) {
  return ag::sigmoid(ag::conv1d_same(ag::frame_mean(fm), p.kernel, p.bias));
}

inline Var temporal_attention(const Var& fm, const TemporalAttentionParams& p) {
  return ag::scale_frames(fm, temporal_gates(fm, p));
}

class Encoder {
 public:
  Encoder() = default;

  Encoder(const EncoderConfig& cfg, ParameterSet& ps, Rng& rng,
          const std::string& prefix = "encoder", std::size_t in_channels = 1)
      : cfg_(cfg) {
    cfg_.validate();
    std::size_t ci = in_channels;
    const std::size_t k = cfg_.kernel;
    for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
      const std::size_t co = cfg_.blocks[i].out_channels;
      const std::string name = prefix + ".block" + std::to_string(i);
      Block b;
      b.conv = ps.add_uniform(name + ".conv.weight", {co, ci, k, k}, ci * k * k, rng);
      b.gamma = ps.add(name + ".bn.weight", Tensor({co}, 1.0));
      b.beta = ps.add(name + ".bn.bias", Tensor({co}, 0.0));
      b.bn = &ps.add_batch_norm(name + ".bn", co);
      if (cfg_.attention) {
        const std::size_t hidden = std::max<std::size_t>(1, co / cfg_.reduction);
        b.ca.fc1_w = ps.add_uniform(name + ".channel_att.fc1.weight", {hidden, co}, co, rng);
        b.ca.fc1_b = ps.add_uniform(name + ".channel_att.fc1.bias", {hidden}, co, rng);
        b.ca.fc2_w = ps.add_uniform(name + ".channel_att.fc2.weight", {co, hidden}, hidden, rng);
        b.ca.fc2_b = ps.add_uniform(name + ".channel_att.fc2.bias", {co}, hidden, rng);
        const std::size_t tk = cfg_.temporal_kernel;
        b.ta.kernel = ps.add_uniform(name + ".temporal_att.weight", {tk}, tk, rng);
        b.ta.bias = ps.add_uniform(name + ".temporal_att.bias", {1}, tk, rng);
      }
      blocks_.push_back(b);
      ci = co;
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  Var forward(const Var& x, bool training) const {
    if (x.value().rank() != 4 || x.dim(1) != 1) {
      throw ShapeError("encoder expects (B, 1, n_mels, n_frames), got " +
                       shape_string(x.shape()));
    }
    cfg_.output_shape(x.dim(2), x.dim(3));
    Var h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Block& b = blocks_[i];
      h = ag::conv2d(h, b.conv, std::nullopt, cfg_.kernel / 2);
      h = ag::batch_norm(h, b.gamma, b.beta, *b.bn, training);
      h = ag::relu(h);
      if (cfg_.blocks[i].pool > 1) h = ag::max_pool2d(h, cfg_.blocks[i].pool);
      if (cfg_.attention) {
        h = channel_attention(h, b.ca);
        h = temporal_attention(h, b.ta);
      }
    }
    return h;
  }

 private:
  struct Block {
    Var conv, gamma, beta;
    BatchNormState* bn = nullptr;
    ChannelAttentionParams ca;
    TemporalAttentionParams ta;
  };
  EncoderConfig cfg_;
  std::vector<Block> blocks_;
};

}  // namespace fsed::nn
