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
 * @file heads.hpp
 * @brief Prototype and label-propagation metric heads.
 *
 * Both heads take class-major support maps and query maps of identical
 * shape and return a (T, N) score matrix where larger means closer:
 *
 *   proto:  s[q, c] = -||e_q - mean_k e_{c,k}||^2
 *   tpn:    W_ij = exp(-1/2 ||e_i/sigma_i - e_j/sigma_j||^2), top-k per row,
 *           symmetrized by max, S = D^-1/2 W D^-1/2,
 *           F = (I - alpha S)^-1 Y, scores = query rows of F
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>
#include <vector>

#include "fsed/error.hpp"
#include "fsed/nn/module.hpp"

namespace fsed::nn {

enum class HeadKind { proto, tpn };

inline std::string to_string(HeadKind h) { return h == HeadKind::proto ? "proto" : "tpn"; }

inline HeadKind parse_head(const std::string& s) {
  if (s == "proto") return HeadKind::proto;
  if (s == "tpn") return HeadKind::tpn;
  throw std::invalid_argument("head must be 'proto' or 'tpn', got '" + s + "'");
}

struct EpisodeScores {
  Var scores;  // (T, N)
  HeadKind head = HeadKind::proto;
};

inline Var flatten_rows(const Var& x) {
  const std::size_t b = x.value().rank() == 0 ? 0 : x.dim(0);
  const std::size_t d = b == 0 ? 0 : x.value().size() / b;
  return ag::reshape(x, {b, d});
}

/// (N, d) class means of class-major (N*K, ...) embeddings.
inline Var prototypes(const Var& support, std::size_t k_shot) {
  if (k_shot == 0) throw std::invalid_argument("prototypes: a class has no support samples");
  return ag::group_mean(flatten_rows(support), k_shot);
}

/// (T, N) negative squared Euclidean distances.
inline Var proto_scores(const Var& protos, const Var& query) {
  return ag::scale(ag::pairwise_sqdist(flatten_rows(query), protos), -1.0);
}

/// Mean soft cross-entropy of scores against (T, N) target rows.
inline Var episode_loss(const EpisodeScores& s, const Tensor& targets) {
  return ag::soft_cross_entropy(s.scores, targets);
}

class ProtoHead {
 public:
  EpisodeScores score(const Var& support, const Var& query, std::size_t /*n_way*/,
                      std::size_t k_shot) const {
    return {proto_scores(prototypes(support, k_shot), query), HeadKind::proto};
  }
};

struct GraphConfig {
  double alpha = 0.99;
  std::size_t max_neighbors = 20;
  double isolated_epsilon = 1e-10;
  bool normalize_scores = false;  // rescale propagated rows to sum to one
};

struct PropagationGraph {
  Var s_norm;     // D^-1/2 W D^-1/2
  Tensor weights; // W after sparsification and symmetrization
  std::size_t k_neighbors = 0;
  bool isolated_fixed = false;
};

/// Sparsifies a dense similarity matrix (top-k per row, zero diagonal),
/// symmetrizes it by max and normalizes it. Rows left without any weight
/// get `isolated_epsilon` links to every other vertex.
inline PropagationGraph graph_from_weights(const Var& w, const GraphConfig& cfg) {
  const std::size_t n = w.dim(0);
  if (n < 2) throw std::invalid_argument("graph needs at least two vertices");
  const std::size_t k = std::min(cfg.max_neighbors, n - 1);
  const Tensor& wv = w.value();
  Tensor keep({n, n});
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double va = wv.at(i, a), vb = wv.at(i, b);
                        return va != vb ? va > vb : a < b;
                      });
    for (std::size_t j = 0; j < k; ++j) keep.at(i, order[j]) = 1.0;
  }
  Var sym = ag::sym_max(ag::mask_mul(w, keep));
  PropagationGraph g;
  g.k_neighbors = k;
  const Tensor& sv = sym.value();
  Tensor eps({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += sv.at(i, j);
    if (row < cfg.isolated_epsilon) {
      g.isolated_fixed = true;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        eps.at(i, j) = cfg.isolated_epsilon;
        eps.at(j, i) = cfg.isolated_epsilon;
      }
    }
  }
  if (g.isolated_fixed) sym = ag::add_const(sym, eps);
  g.weights = sym.value();
  g.s_norm = ag::sym_normalize(sym);
  return g;
}

/// Dense W_ij = exp(-1/2 ||x_i/sigma_i - x_j/sigma_j||^2) over (n, d) rows.
inline Var similarity_matrix(const Var& embeddings, const Var& sigma) {
  Var z = ag::div_rows(flatten_rows(embeddings), sigma);
  return ag::exponential(ag::scale(ag::pairwise_sqdist(z, z), -0.5));
}

inline PropagationGraph build_graph(const Var& embeddings, const Var& sigma,
                                    const GraphConfig& cfg) {
  return graph_from_weights(similarity_matrix(embeddings, sigma), cfg);
}

/// Full propagated label matrix F = (I - alpha S)^-1 Y over all vertices.
inline Var propagate_labels(const PropagationGraph& g, const Tensor& y, double alpha) {
  return ag::label_propagation(g.s_norm, y, alpha);
}

/// Per-sample length scales: conv3x3 -> ReLU -> global pool -> dense ->
/// softplus. The final bias starts at softplus^-1(sqrt(d)) so initial
/// scaled distances stay O(1) for O(1) per-feature differences.
class LengthScaleNet {
 public:
  static constexpr std::size_t kHidden = 16;

  LengthScaleNet() = default;
  LengthScaleNet(std::size_t channels, std::size_t feature_dim, ParameterSet& ps, Rng& rng,
                 const std::string& prefix = "head.tpn") {
    conv_w_ = ps.add_uniform(prefix + ".scale.conv.weight", {kHidden, channels, 3, 3},
                             channels * 9, rng);
    conv_b_ = ps.add_uniform(prefix + ".scale.conv.bias", {kHidden}, channels * 9, rng);
    fc_w_ = ps.add_uniform(prefix + ".scale.fc.weight", {1, kHidden}, kHidden, rng);
    const double target = std::sqrt(static_cast<double>(std::max<std::size_t>(feature_dim, 1)));
    fc_b_ = ps.add(prefix + ".scale.fc.bias", Tensor({1}, target + std::log(-std::expm1(-target))));
  }

  /// (B, 1) positive scales for (B, C, h, w) maps.
  Var operator()(const Var& maps) const {
    Var h = ag::relu(ag::conv2d(maps, conv_w_, conv_b_, 1));
    return ag::softplus(ag::linear(ag::spatial_mean(h), fc_w_, fc_b_));
  }

  Var& fc_weight() { return fc_w_; }
  Var& fc_bias() { return fc_b_; }

 private:
  Var conv_w_, conv_b_, fc_w_, fc_b_;
};

class TpnHead {
 public:
  TpnHead() = default;
  TpnHead(std::size_t channels, std::size_t feature_dim, const GraphConfig& cfg, ParameterSet& ps,
          Rng& rng)
      : cfg_(cfg), scales_(channels, feature_dim, ps, rng) {}

  const GraphConfig& config() const { return cfg_; }
  const LengthScaleNet& scales() const { return scales_; }

  EpisodeScores score(const Var& support, const Var& query, std::size_t n_way,
                      std::size_t k_shot) const {
    const std::size_t ns = n_way * k_shot;
    if (support.dim(0) != ns) {
      throw ShapeError("tpn: support batch is not N*K");
    }
    Var all = ag::concat0({support, query});
    const std::size_t n = all.dim(0);
    PropagationGraph g = build_graph(all, scales_(all), cfg_);
    Tensor y({n, n_way});
    for (std::size_t i = 0; i < ns; ++i) y.at(i, i / k_shot) = 1.0;
    Var f = ag::slice0(propagate_labels(g, y, cfg_.alpha), ns, n);
    if (cfg_.normalize_scores) f = ag::row_normalize(f);
    return {f, HeadKind::tpn};
  }

 private:
  GraphConfig cfg_;
  LengthScaleNet scales_;
};

/// A head maps (support maps, query maps, N, K) to episode scores.
template <typename H>
concept MetricHead = requires(const H& h, const Var& s, const Var& q, std::size_t n) {
  { h.score(s, q, n, n) } -> std::same_as<EpisodeScores>;
};

static_assert(MetricHead<ProtoHead>);
static_assert(MetricHead<TpnHead>);

}  // namespace fsed::nn
