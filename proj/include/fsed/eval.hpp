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
 * @file eval.hpp
 * @brief Episodic accuracy, confidence intervals, AUC, shot sweeps, export.
 *
 * Results table (`results.csv`):
 *
 *     model,N,K,n_episodes,mean_acc,ci95
 *
 * with accuracies printed to six decimals. Per-episode rows go to
 * `episodes.csv` as `model,N,K,episode,seed,accuracy`. A sweep also writes
 * `sweep.svg` (accuracy against shots, one line per model) and `sweep.csv`
 * with the plotted points in the results format.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fsed/data/manifest.hpp"
#include "fsed/data/spectrogram_store.hpp"
#include "fsed/episode.hpp"
#include "fsed/error.hpp"
#include "fsed/model.hpp"

namespace fsed {

struct EpisodeResult {
  std::uint64_t episode_seed = 0;
  std::vector<int> predictions;
  std::vector<int> true_labels;
  Tensor scores;  // (T, N)
  double accuracy = 0.0;
};

inline EpisodeResult score_episode(std::uint64_t seed, const Tensor& scores,
                                   const std::vector<int>& labels) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
    throw ShapeError("scores " + shape_string(scores.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  EpisodeResult r{seed, {}, labels, scores, 0.0};
  const std::size_t n = scores.dim(1);
  std::size_t hits = 0;
  for (std::size_t q = 0; q < labels.size(); ++q) {
    const double* row = scores.data() + q * n;
    const int pred = static_cast<int>(std::max_element(row, row + n) - row);
    r.predictions.push_back(pred);
    hits += pred == labels[q];
  }
  r.accuracy = labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
  return r;
}

struct EvalReport {
  std::string model = "model";
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t n_episodes = 0;
  double mean_accuracy = 0.0;
  double ci95 = 0.0;
  std::map<std::string, std::string> tags;  // head, ta, da, attention, ...
  std::optional<double> auc;                 // pooled one-vs-rest, when requested
  std::vector<EpisodeResult> episodes;
};

/// Mean and 1.96 * std / sqrt(n) with the population standard deviation.
inline std::pair<double, double> mean_ci95(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, 1.96 * std::sqrt(ss / n) / std::sqrt(n)};
}

/// Area under the ROC curve by the rank-sum statistic, ties given their
/// average rank. Labels are 0/1 and both must occur.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    pos += y;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: both classes must be present");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// Row softmax of a (T, N) score matrix.
inline Tensor softmax_rows(const Tensor& scores) {
  Tensor out(scores.shape());
  const std::size_t n = scores.dim(1);
  for (std::size_t r = 0; r < scores.dim(0); ++r) {
    const double* row = scores.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) = std::exp(row[c] - mx) / z;
  }
  return out;
}

/// Pooled one-vs-rest AUC: every (query, class) pair contributes the class
/// softmax probability with label 1 for the true class.
inline double pooled_auc(const std::vector<EpisodeResult>& episodes) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& e : episodes) {
    const Tensor p = softmax_rows(e.scores);
    for (std::size_t q = 0; q < e.true_labels.size(); ++q) {
      for (std::size_t c = 0; c < p.dim(1); ++c) {
        s.push_back(p.at(q, c));
        y.push_back(static_cast<int>(c) == e.true_labels[q] ? 1 : 0);
      }
    }
  }
  return auc(s, y);
}

using Scorer = std::function<Tensor(const Episode&)>;

struct EvalOptions {
  TaskConfig task;
  std::size_t n_episodes = 1000;
  std::uint64_t seed = 0;
  bool compute_auc = false;
  std::string model_name = "model";
  std::map<std::string, std::string> tags;
};

inline std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t i) {
  return derive_seed(seed, "eval-episode", i);
}

/// Mean accuracy of a scorer over seeded test episodes. Episodes are never
/// augmented.
inline EvalReport evaluate_scorer(const Scorer& scorer, const std::set<std::string>& classes,
                                  const data::DatasetManifest& manifest,
                                  const data::SpectrogramStore& store, const EvalOptions& opt) {
  opt.task.validate();
  if (opt.task.n_way > classes.size()) {
    throw std::invalid_argument("evaluation needs " + std::to_string(opt.task.n_way) +
                                " classes; the test split has " + std::to_string(classes.size()));
  }
  EvalReport rep;
  rep.model = opt.model_name;
  rep.n_way = opt.task.n_way;
  rep.k_shot = opt.task.k_shot;
  rep.n_episodes = opt.n_episodes;
  rep.tags = opt.tags;
  std::vector<double> accs;
  for (std::size_t i = 0; i < opt.n_episodes; ++i) {
    const std::uint64_t seed = eval_episode_seed(opt.seed, i);
    const Episode ep = sample_episode(classes, manifest, opt.task, seed, store);
    rep.episodes.push_back(score_episode(seed, scorer(ep), ep.query_labels()));
    accs.push_back(rep.episodes.back().accuracy);
  }
  std::tie(rep.mean_accuracy, rep.ci95) = mean_ci95(accs);
  if (opt.compute_auc && !rep.episodes.empty()) rep.auc = pooled_auc(rep.episodes);
  return rep;
}

inline Scorer model_scorer(FewShotModel& model) {
  return [&model](const Episode& ep) { return model.predict(ep); };
}

inline std::map<std::string, std::string> model_tags(const ModelConfig& c) {
  return {{"head", nn::to_string(c.head)},
          {"ta", detail::bool_text(c.task_adaptive.enabled)},
          {"attention", detail::bool_text(c.encoder.attention)}};
}

inline EvalReport evaluate(FewShotModel& model, const std::set<std::string>& classes,
                           const data::DatasetManifest& manifest,
                           const data::SpectrogramStore& store, EvalOptions opt) {
  for (const auto& [k, v] : model_tags(model.config())) opt.tags.emplace(k, v);
  return evaluate_scorer(model_scorer(model), classes, manifest, store, opt);
}

/// Raw-spectrogram nearest-prototype baseline (negative squared distance to
/// the class mean of support spectrograms).
inline Tensor raw_prototype_scores(const Episode& ep) {
  const std::size_t n = ep.cfg.n_way, k = ep.cfg.k_shot;
  const std::size_t d = ep.support.front().spec.values.size();
  std::vector<std::vector<double>> protos(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < ep.support.size(); ++i) {
    auto& p = protos[static_cast<std::size_t>(ep.support[i].label)];
    for (std::size_t j = 0; j < d; ++j) p[j] += ep.support[i].spec.values[j] / static_cast<double>(k);
  }
  Tensor s({ep.query.size(), n});
  for (std::size_t q = 0; q < ep.query.size(); ++q) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = ep.query[q].spec.values[j] - protos[c][j];
        acc += diff * diff;
      }
      s.at(q, c) = -acc;
    }
  }
  return s;
}

struct SweepModel {
  std::string name;
  Scorer scorer;
  std::map<std::string, std::string> tags;
};

struct SweepTable {
  std::vector<EvalReport> rows;
  std::vector<std::string> warnings;  // skipped (model, k) combinations
};

/// Evaluates every model at every feasible k. A k is infeasible when some
/// test class owns fewer than k + queries_per_class clips.
inline SweepTable shot_sweep(const std::vector<SweepModel>& models, const std::vector<std::size_t>& ks,
                             const std::set<std::string>& classes,
                             const data::DatasetManifest& manifest,
                             const data::SpectrogramStore& store, const EvalOptions& base) {
  if (ks.empty()) throw std::invalid_argument("shot sweep needs at least one k");
  const auto by_class = manifest.clips_by_class();
  std::size_t min_clips = SIZE_MAX;
  for (const auto& c : classes) {
    auto it = by_class.find(c);
    min_clips = std::min(min_clips, it == by_class.end() ? std::size_t{0} : it->second.size());
  }
  SweepTable table;
  for (const auto& m : models) {
    for (std::size_t k : ks) {
      if (k == 0 || k + base.task.queries_per_class > min_clips) {
        table.warnings.push_back("skipped model=" + m.name + " k=" + std::to_string(k) +
                                 ": classes need " + std::to_string(k + base.task.queries_per_class) +
                                 " clips, smallest test class has " + std::to_string(min_clips));
        continue;
      }
      EvalOptions opt = base;
      opt.task.k_shot = k;
      opt.model_name = m.name;
      for (const auto& [key, v] : m.tags) opt.tags[key] = v;
      table.rows.push_back(evaluate_scorer(m.scorer, classes, manifest, store, opt));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Export

inline std::string results_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "model,N,K,n_episodes,mean_acc,ci95\n" << std::fixed << std::setprecision(6);
  for (const auto& r : reports) {
    os << data::detail::csv_quote(r.model) << ',' << r.n_way << ',' << r.k_shot << ','
       << r.n_episodes << ',' << r.mean_accuracy << ',' << r.ci95 << '\n';
  }
  return os.str();
}

inline std::string episodes_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "model,N,K,episode,seed,accuracy\n" << std::fixed << std::setprecision(6);
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
      os << data::detail::csv_quote(r.model) << ',' << r.n_way << ',' << r.k_shot << ',' << i
         << ',' << r.episodes[i].episode_seed << ',' << r.episodes[i].accuracy << '\n';
    }
  }
  return os.str();
}

/// Accuracy-against-shots line plot, one polyline per model.
inline std::string sweep_svg(const std::vector<EvalReport>& rows) {
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::vector<std::string> order;
  double kmin = 1e300, kmax = -1e300;
  for (const auto& r : rows) {
    if (!series.count(r.model)) order.push_back(r.model);
    series[r.model].emplace_back(static_cast<double>(r.k_shot), r.mean_accuracy);
    kmin = std::min(kmin, static_cast<double>(r.k_shot));
    kmax = std::max(kmax, static_cast<double>(r.k_shot));
  }
  if (rows.empty()) kmin = 0, kmax = 1;
  if (kmax <= kmin) kmax = kmin + 1;
  const double w = 640, h = 400, left = 60, right = 160, top = 20, bottom = 50;
  auto px = [&](double k) { return left + (k - kmin) / (kmax - kmin) * (w - left - right); };
  auto py = [&](double a) { return top + (1.0 - a) * (h - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << w - right << "\" y2=\""
     << py(0) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1)
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double a = t / 10.0;
    os << "<text x=\"" << left - 8 << "\" y=\"" << py(a) + 4
       << "\" font-size=\"11\" text-anchor=\"end\">" << a << "</text>\n";
  }
  for (const auto& r : rows) {
    os << "<text x=\"" << px(static_cast<double>(r.k_shot)) << "\" y=\"" << h - bottom + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << r.k_shot << "</text>\n";
  }
  os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10
     << "\" font-size=\"12\" text-anchor=\"middle\">shots (K)</text>\n";
  os << "<text x=\"14\" y=\"" << h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << h / 2
     << ")\" text-anchor=\"middle\">accuracy</text>\n";
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto pts = series[order[i]];
    std::sort(pts.begin(), pts.end());
    const char* color = colors[i % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < pts.size(); ++j) {
      os << (j ? " " : "") << px(pts[j].first) << ',' << py(pts[j].second);
    }
    os << "\"/>\n";
    for (const auto& [k, a] : pts) {
      os << "<circle cx=\"" << px(k) << "\" cy=\"" << py(a) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    os << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 16 * (i + 1) << "\" font-size=\"12\" fill=\""
       << color << "\">" << order[i] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}
}  // namespace detail

/// Writes results.csv and episodes.csv; with `plot` set also sweep.svg and
/// its sweep.csv sidecar.
inline void export_results(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir,
                           bool plot = false) {
  if (reports.empty()) throw std::invalid_argument("export_results: no reports");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  detail::write_text(out_dir / "results.csv", results_csv(reports));
  detail::write_text(out_dir / "episodes.csv", episodes_csv(reports));
  if (plot) {
    detail::write_text(out_dir / "sweep.svg", sweep_svg(reports));
    detail::write_text(out_dir / "sweep.csv", results_csv(reports));
  }
}

}  // namespace fsed
