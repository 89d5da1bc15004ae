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
 * @file model.hpp
 * @brief Encoder, optional task mask and metric head wired into one model.
 *
 * Support and query spectrograms go through the encoder as one batch, so in
 * training mode batch-norm statistics cover the whole episode. With the task
 * mask enabled, support maps feed the mask and both sets are reshaped and
 * masked before the head. Without it the head sees encoder maps directly.
 */
#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsed/episode.hpp"
#include "fsed/nn/encoder.hpp"
#include "fsed/nn/heads.hpp"
#include "fsed/nn/task_adaptive.hpp"

namespace fsed {

namespace detail {
inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("'" + key + "' expects on/off, got '" + v + "'");
}
inline std::string bool_text(bool b) { return b ? "on" : "off"; }

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}
inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}
inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + key + "' expects a number, got '" + v + "'");
  }
}
inline std::string real_text(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::vector<nn::ConvBlockSpec> parse_blocks(const std::string& key, const std::string& v) {
  std::vector<nn::ConvBlockSpec> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto slash = item.find('/');
    if (slash == std::string::npos) {
      throw std::invalid_argument("'" + key + "' expects channels/pool items, got '" + item + "'");
    }
    out.push_back({parse_size(key, item.substr(0, slash)), parse_size(key, item.substr(slash + 1))});
  }
  if (out.empty()) throw std::invalid_argument("'" + key + "' is empty");
  return out;
}
inline std::string blocks_text(const std::vector<nn::ConvBlockSpec>& blocks) {
  std::string s;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    s += (i ? "," : "") + std::to_string(blocks[i].out_channels) + "/" +
         std::to_string(blocks[i].pool);
  }
  return s;
}
}  // namespace detail

struct ModelConfig {
  std::size_t n_mels = 128;
  std::size_t n_frames = 157;
  std::size_t n_way = 5;
  nn::EncoderConfig encoder;
  nn::TaskAdaptiveConfig task_adaptive;
  nn::HeadKind head = nn::HeadKind::tpn;
  nn::GraphConfig graph;
  bool tpn_masked_graph = true;  // build the graph on masked rather than encoder maps
  std::uint64_t init_seed = 0;

  /// Ordered key/value view; also the checkpoint's config text.
  std::vector<std::pair<std::string, std::string>> to_pairs() const {
    using namespace detail;
    return {
        {"model.n_mels", std::to_string(n_mels)},
        {"model.n_frames", std::to_string(n_frames)},
        {"model.n_way", std::to_string(n_way)},
        {"model.encoder.blocks", blocks_text(encoder.blocks)},
        {"model.encoder.kernel", std::to_string(encoder.kernel)},
        {"model.attention", bool_text(encoder.attention)},
        {"model.encoder.reduction", std::to_string(encoder.reduction)},
        {"model.encoder.temporal_kernel", std::to_string(encoder.temporal_kernel)},
        {"model.ta", bool_text(task_adaptive.enabled)},
        {"model.ta.m2", std::to_string(task_adaptive.m2)},
        {"model.ta.m3", std::to_string(task_adaptive.m3)},
        {"model.ta.reshaper_m3", std::to_string(task_adaptive.reshaper_m3)},
        {"model.head", nn::to_string(head)},
        {"model.tpn.alpha", real_text(graph.alpha)},
        {"model.tpn.max_neighbors", std::to_string(graph.max_neighbors)},
        {"model.tpn.isolated_epsilon", real_text(graph.isolated_epsilon)},
        {"model.tpn.normalize_scores", bool_text(graph.normalize_scores)},
        {"model.tpn.masked_graph", bool_text(tpn_masked_graph)},
        {"model.init_seed", std::to_string(init_seed)},
    };
  }

  /// Applies one key; returns false for keys outside the model namespace.
  bool set(const std::string& key, const std::string& v) {
    using namespace detail;
    if (key == "model.n_mels") n_mels = parse_size(key, v);
    else if (key == "model.n_frames") n_frames = parse_size(key, v);
    else if (key == "model.n_way") n_way = parse_size(key, v);
    else if (key == "model.encoder.blocks") encoder.blocks = parse_blocks(key, v);
    else if (key == "model.encoder.preset") {
      if (v == "three-block") encoder.blocks = nn::EncoderConfig::three_block_preset().blocks;
      else if (v == "five-block") encoder.blocks = nn::EncoderConfig::five_block_preset().blocks;
      else throw std::invalid_argument("'" + key + "' expects three-block or five-block, got '" + v + "'");
    }
    else if (key == "model.encoder.kernel") encoder.kernel = parse_size(key, v);
    else if (key == "model.attention") encoder.attention = parse_bool(key, v);
    else if (key == "model.encoder.reduction") encoder.reduction = parse_size(key, v);
    else if (key == "model.encoder.temporal_kernel") encoder.temporal_kernel = parse_size(key, v);
    else if (key == "model.ta") task_adaptive.enabled = parse_bool(key, v);
    else if (key == "model.ta.m2") task_adaptive.m2 = parse_size(key, v);
    else if (key == "model.ta.m3") task_adaptive.m3 = parse_size(key, v);
    else if (key == "model.ta.reshaper_m3") task_adaptive.reshaper_m3 = parse_size(key, v);
    else if (key == "model.head") head = nn::parse_head(v);
    else if (key == "model.tpn.alpha") graph.alpha = parse_real(key, v);
    else if (key == "model.tpn.max_neighbors") graph.max_neighbors = parse_size(key, v);
    else if (key == "model.tpn.isolated_epsilon") graph.isolated_epsilon = parse_real(key, v);
    else if (key == "model.tpn.normalize_scores") graph.normalize_scores = parse_bool(key, v);
    else if (key == "model.tpn.masked_graph") tpn_masked_graph = parse_bool(key, v);
    else if (key == "model.init_seed") init_seed = parse_u64(key, v);
    else return false;
    return true;
  }

  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : to_pairs()) s += k + "=" + v + "\n";
    return s;
  }
  std::uint64_t hash() const { return fnv1a(canonical()); }

  static ModelConfig parse(const std::string& text) {
    ModelConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos || !c.set(line.substr(0, eq), line.substr(eq + 1))) {
        throw ParseError("model config: unexpected line '" + line + "'");
      }
    }
    return c;
  }
};

/// (B, 1, n_mels, n_frames) stack of spectrograms.
inline Tensor stack_spectrograms(const std::vector<LabeledSpectrogram>& items) {
  if (items.empty()) throw std::invalid_argument("cannot stack an empty set");
  const std::size_t m = items[0].spec.n_mels(), f = items[0].spec.n_frames();
  Tensor out({items.size(), 1, m, f});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor& v = items[i].spec.values;
    if (v.shape() != Shape{m, f}) {
      throw ShapeError("spectrogram " + items[i].spec.clip_id + " has shape " +
                       shape_string(v.shape()) + ", expected " + shape_string({m, f}));
    }
    std::copy(v.data(), v.data() + v.size(), out.data() + i * m * f);
  }
  return out;
}

/// Intermediate tensors of one forward pass.
struct ForwardTrace {
  nn::Var support_maps;  // encoder output
  nn::Var query_maps;
  nn::Var task_mask;     // empty unless the task mask is enabled
  nn::Var support_embed; // what the head consumed
  nn::Var query_embed;
};

class FewShotModel {
 public:
  explicit FewShotModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    Rng rng(derive_seed(cfg_.init_seed, "model-init"));
    encoder_ = nn::Encoder(cfg_.encoder, params_, rng, "encoder");
    const Shape enc = cfg_.encoder.output_shape(cfg_.n_mels, cfg_.n_frames);
    std::size_t head_channels = enc[0];
    if (cfg_.task_adaptive.enabled) {
      ta_ = nn::TaskAdaptive(cfg_.task_adaptive, enc[0], cfg_.n_way, params_, rng,
                             "task_adaptive");
      if (cfg_.tpn_masked_graph) head_channels = cfg_.task_adaptive.m3;
    }
    if (cfg_.head == nn::HeadKind::tpn) {
      if (!(cfg_.graph.alpha >= 0.0 && cfg_.graph.alpha < 1.0)) {
        throw std::invalid_argument("tpn alpha must lie in [0, 1)");
      }
      tpn_ = nn::TpnHead(head_channels, head_channels * enc[1] * enc[2], cfg_.graph, params_, rng);
    }
  }

  // Blocks hold pointers into params_.
  FewShotModel(const FewShotModel&) = delete;
  FewShotModel& operator=(const FewShotModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const nn::Encoder& encoder() const { return encoder_; }
  const nn::LengthScaleNet& tpn_scales() const { return tpn_.scales(); }
  const nn::TaskAdaptive& task_adaptive() const { return ta_; }

  /// Scores for stacked support (N*K, 1, M, F) and query (T, 1, M, F).
  nn::EpisodeScores forward(const Tensor& support, const Tensor& query, std::size_t n_way,
                            std::size_t k_shot, bool training, ForwardTrace* trace = nullptr) {
    if (support.dim(0) != n_way * k_shot) {
      throw ShapeError("support batch " + std::to_string(support.dim(0)) + " is not N*K = " +
                       std::to_string(n_way * k_shot));
    }
    if (cfg_.task_adaptive.enabled && n_way != cfg_.n_way) {
      throw std::invalid_argument("model was built for " + std::to_string(cfg_.n_way) +
                                  "-way episodes; got " + std::to_string(n_way));
    }
    const std::size_t ns = support.dim(0), nq = query.dim(0);
    Shape both_shape = support.shape();
    both_shape[0] = ns + nq;
    Tensor both(both_shape);
    std::copy(support.data(), support.data() + support.size(), both.data());
    std::copy(query.data(), query.data() + query.size(), both.data() + support.size());

    nn::Var maps = encoder_.forward(nn::Var(std::move(both)), training);
    nn::Var s_maps = ag::slice0(maps, 0, ns);
    nn::Var q_maps = ag::slice0(maps, ns, ns + nq);
    nn::Var s_emb = s_maps, q_emb = q_maps, p;
    if (cfg_.task_adaptive.enabled) {
      p = ta_.mask(s_maps, k_shot);
      nn::Var r = ta_.reshape_features(maps);
      nn::Var masked = nn::apply_task_mask(p, r);
      s_emb = ag::slice0(masked, 0, ns);
      q_emb = ag::slice0(masked, ns, ns + nq);
    }
    if (trace) *trace = {s_maps, q_maps, p, s_emb, q_emb};
    if (cfg_.head == nn::HeadKind::proto) {
      return nn::ProtoHead{}.score(s_emb, q_emb, n_way, k_shot);
    }
    if (cfg_.task_adaptive.enabled && !cfg_.tpn_masked_graph) {
      return tpn_.score(s_maps, q_maps, n_way, k_shot);
    }
    return tpn_.score(s_emb, q_emb, n_way, k_shot);
  }

  nn::EpisodeScores forward(const Episode& ep, bool training, ForwardTrace* trace = nullptr) {
    return forward(stack_spectrograms(ep.support), stack_spectrograms(ep.query), ep.cfg.n_way,
                   ep.cfg.k_shot, training, trace);
  }

  /// Inference-mode scores as plain values.
  Tensor predict(const Episode& ep) {
    ag::NoGradGuard guard;
    return forward(ep, false).scores.value();
  }

  /// Inference-mode task mask of an episode's support set.
  Tensor task_mask(const Episode& ep) {
    if (!cfg_.task_adaptive.enabled) throw std::logic_error("task mask is disabled");
    ag::NoGradGuard guard;
    nn::Var maps = encoder_.forward(nn::Var(stack_spectrograms(ep.support)), false);
    return ta_.mask(maps, ep.cfg.k_shot).value();
  }

 private:
  ModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Encoder encoder_;
  nn::TaskAdaptive ta_;
  nn::TpnHead tpn_;
};

}  // namespace fsed
