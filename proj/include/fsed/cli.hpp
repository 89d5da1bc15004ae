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
 * @file cli.hpp
 * @brief `fsed` command line: prepare, train, eval, sweep.
 *
 *     fsed prepare --manifest m.csv --out cache/
 *     fsed train   --config c.cfg --seed 7 --out run/
 *     fsed eval    --config c.cfg --checkpoint run/best.ckpt --n-way 5 --k-shot 1 --episodes 1000
 *     fsed sweep   --config c.cfg --checkpoint a.ckpt --checkpoint b.ckpt --out sweep/
 *
 * Settings resolve as defaults < config file < flags < --set, in that order.
 * Exit status: 0 success, 1 pipeline failure, 2 usage error.
 *
 * Outputs. prepare: cache files in data.cache_dir, or --out when no cache
 * directory is configured. train: config.cfg, split.csv, metrics.csv,
 * best.ckpt, last.ckpt. eval/sweep: results table on stdout; with --out also
 * results.csv and episodes.csv (sweep adds sweep.svg and sweep.csv).
 */
#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fsed/checkpoint.hpp"
#include "fsed/config.hpp"
#include "fsed/data/prepare.hpp"
#include "fsed/data/split.hpp"
#include "fsed/eval.hpp"
#include "fsed/train.hpp"

namespace fsed::cli {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> n_way;
  std::optional<std::size_t> k_shot;
  std::optional<std::size_t> episodes;
  std::string head;
  std::string ta;
  std::string da;
  std::string attention;
  std::string noise;
  std::string exclude_domain;
  std::string manifest;
  std::string shots;
  std::vector<std::string> checkpoints;
  std::vector<std::string> sets;
};

/// Every long flag accepted by `fsed`.
inline const std::vector<std::string>& flag_names() {
  static const std::vector<std::string> names = {
      "--config", "--seed", "--out", "--n-way", "--k-shot", "--episodes",
      "--head", "--ta", "--da", "--attention", "--noise", "--exclude-domain",
      "--manifest", "--checkpoint", "--shots", "--set", "--help"};
  return names;
}

inline void build_app(CLI::App& app, Flags& f) {
  app.description("Few-shot sound event detection: prepare, train, eval, sweep.");
  app.set_help_flag("-h,--help", "Print this help and exit");
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_subcommand("prepare", "Extract log-mel spectrograms for a manifest into a cache directory");
  app.add_subcommand("train", "Episodic training; writes checkpoints and a metrics log to --out");
  app.add_subcommand("eval", "Evaluate a checkpoint on seeded test episodes");
  app.add_subcommand("sweep", "Evaluate checkpoints over a range of shots and plot accuracy");

  const auto on_off = CLI::IsMember({"on", "off"});
  app.add_option("--config", f.config, "Config file (key = value lines)");
  app.add_option("--seed", f.seed, "Seed for every random draw (seed)");
  app.add_option("--out", f.out, "Output directory (out)");
  app.add_option("--n-way", f.n_way, "Classes per episode (task.n_way)");
  app.add_option("--k-shot", f.k_shot, "Support examples per class (task.k_shot)");
  app.add_option("--episodes", f.episodes, "Evaluation episodes (eval.episodes)");
  app.add_option("--head", f.head, "Metric head (model.head)")->check(CLI::IsMember({"proto", "tpn"}));
  app.add_option("--ta", f.ta, "Task-adaptive mask (model.ta)")->check(on_off);
  app.add_option("--da", f.da, "Masked mixup during training (train.augmentation)")->check(on_off);
  app.add_option("--attention", f.attention, "Temporal and channel attention (model.attention)")
      ->check(on_off);
  app.add_option("--noise", f.noise, "Clean or noise-mixed features (data.noise)")
      ->check(CLI::IsMember({"clean", "mixed"}));
  app.add_option("--exclude-domain", f.exclude_domain,
                 "Hold a domain out of training and test on it only (split.exclude_domain)");
  app.add_option("--manifest", f.manifest, "Dataset manifest (data.manifest)");
  app.add_option("--checkpoint", f.checkpoints, "Checkpoint file; repeat for sweeps")
      ->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--shots", f.shots, "Comma-separated shots for sweep (eval.shots)");
  app.add_option("--set", f.sets, "Override any config key, key=value; repeatable")
      ->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

inline std::string help_text() {
  CLI::App app{"fsed"};
  Flags f;
  build_app(app, f);
  return app.help("fsed");
}

/// Defaults, then the config file, then flags, then --set pairs.
inline ExperimentConfig resolve_config(const Flags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) c.merge_file(f.config);
  auto set = [&](const std::string& key, const std::string& v) {
    if (!v.empty()) c.set(key, v);
  };
  if (f.seed) c.seed = *f.seed;
  set("out", f.out);
  if (f.n_way) c.task.n_way = *f.n_way;
  if (f.k_shot) c.task.k_shot = *f.k_shot;
  if (f.episodes) c.eval_episodes = *f.episodes;
  set("model.head", f.head);
  set("model.ta", f.ta);
  set("train.augmentation", f.da);
  set("model.attention", f.attention);
  set("data.noise", f.noise);
  if (!f.exclude_domain.empty()) {
    c.set("split.exclude_domain", f.exclude_domain);
    c.split.domain_mismatch = true;
  }
  set("data.manifest", f.manifest);
  set("eval.shots", f.shots);
  for (const auto& kv : f.sets) c.set_assignment(kv);
  return c;
}

struct LoadedData {
  data::DatasetManifest manifest;
  data::SpectrogramStore store;
  data::ClassSplit split;
};

inline data::DatasetManifest require_manifest(const ExperimentConfig& c) {
  if (c.manifest.empty()) throw std::invalid_argument("no manifest: pass --manifest or set data.manifest");
  return data::load_manifest(c.manifest);
}

inline std::optional<data::NoiseBank> noise_bank(const ExperimentConfig& c) {
  if (c.prepare.noise != data::NoiseMode::mixed) return std::nullopt;
  if (c.noise_manifest.empty()) {
    throw std::invalid_argument("data.noise = mixed needs data.noise_manifest (scene recordings)");
  }
  return data::NoiseBank::load(data::load_manifest(c.noise_manifest), c.prepare.mel.target_rate_hz);
}

inline data::ClassSplit resolve_split(const ExperimentConfig& c, const data::DatasetManifest& m) {
  data::SplitSpec spec = c.split_spec();
  if (!c.exclude_domain.empty()) {
    if (c.domain_file.empty()) {
      throw std::invalid_argument("split.exclude_domain needs data.domain_file (label,domain table)");
    }
    spec.excluded = data::classes_in_domain(data::load_domain_map(c.domain_file), c.exclude_domain);
    if (spec.excluded.empty()) {
      throw std::invalid_argument("domain '" + c.exclude_domain + "' has no classes");
    }
  }
  return data::split_classes(m, spec);
}

inline LoadedData load_data(const ExperimentConfig& c) {
  LoadedData d;
  d.manifest = require_manifest(c);
  const auto bank = noise_bank(c);
  std::optional<std::filesystem::path> cache;
  if (!c.cache_dir.empty()) cache = c.cache_dir;
  d.store = data::prepare_corpus(d.manifest, c.prepare_options(), cache, bank ? &*bank : nullptr);
  d.split = resolve_split(c, d.manifest);
  return d;
}

inline const std::set<std::string>& eval_classes(const ExperimentConfig& c, const data::ClassSplit& s) {
  if (c.eval_split == "val") return s.val_classes;
  if (c.eval_split == "train") return s.train_classes;
  return s.test_classes;
}

inline std::filesystem::path require_out(const ExperimentConfig& c) {
  if (c.out_dir.empty()) throw std::invalid_argument("no output directory: pass --out or set out");
  std::filesystem::create_directories(c.out_dir);
  return c.out_dir;
}

inline std::string split_csv(const data::ClassSplit& s) {
  std::string out = "class,split\n";
  for (const auto& c : s.train_classes) out += data::detail::csv_quote(c) + ",train\n";
  for (const auto& c : s.val_classes) out += data::detail::csv_quote(c) + ",val\n";
  for (const auto& c : s.test_classes) out += data::detail::csv_quote(c) + ",test\n";
  return out;
}

inline int cmd_prepare(const ExperimentConfig& c, std::ostream& out) {
  const data::DatasetManifest m = require_manifest(c);
  const std::string dir = !c.cache_dir.empty() ? c.cache_dir : c.out_dir;
  if (dir.empty()) throw std::invalid_argument("no cache directory: set data.cache_dir or pass --out");
  const auto bank = noise_bank(c);
  std::size_t computed = 0;
  const auto store = data::prepare_corpus(m, c.prepare_options(), std::filesystem::path(dir),
                                          bank ? &*bank : nullptr, &computed);
  out << "prepared " << store.size() << " clips (" << computed << " computed) in " << dir << '\n';
  return 0;
}

inline int cmd_train(const ExperimentConfig& c, std::ostream& out) {
  const auto dir = require_out(c);
  const LoadedData d = load_data(c);
  detail::write_text(dir / "config.cfg", c.text());
  detail::write_text(dir / "split.csv", split_csv(d.split));
  FewShotModel model(c.model_config());
  std::ofstream metrics(dir / "metrics.csv");
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.csv").string());
  const TrainResult r = train(model, d.manifest, d.store, d.split, c.train_config(), &metrics);
  detail::write_text(dir / "best.ckpt", r.best_checkpoint);
  save_checkpoint(dir / "last.ckpt", model);
  out << "trained " << r.steps << " steps; best epoch " << r.best_epoch;
  if (r.best_val_acc) out << " (val acc " << *r.best_val_acc << ")";
  out << "; checkpoints in " << dir.string() << '\n';
  return 0;
}

inline std::unique_ptr<FewShotModel> load_for(const ExperimentConfig& c, const std::string& path) {
  auto model = load_checkpoint(std::filesystem::path(path));
  const ModelConfig& m = model->config();
  if (m.n_mels != static_cast<std::size_t>(c.prepare.mel.n_mels) || m.n_frames != c.n_frames()) {
    throw std::invalid_argument(path + " expects " + std::to_string(m.n_mels) + "x" +
                                std::to_string(m.n_frames) + " spectrograms; the data config gives " +
                                std::to_string(c.prepare.mel.n_mels) + "x" +
                                std::to_string(c.n_frames()));
  }
  return model;
}

inline EvalOptions eval_options(const ExperimentConfig& c) {
  EvalOptions o;
  o.task = c.task;
  o.n_episodes = c.eval_episodes;
  o.seed = c.eval_seed();
  o.compute_auc = c.eval_auc || c.split.domain_mismatch;
  return o;
}

inline std::string model_label(const ExperimentConfig& c, const std::string& path) {
  return c.model_name.empty() ? std::filesystem::path(path).stem().string() : c.model_name;
}

inline int cmd_eval(const ExperimentConfig& c, const std::vector<std::string>& checkpoints,
                    std::ostream& out) {
  if (checkpoints.size() != 1) throw std::invalid_argument("eval takes exactly one --checkpoint");
  auto model = load_for(c, checkpoints.front());
  const LoadedData d = load_data(c);
  EvalOptions o = eval_options(c);
  o.model_name = model_label(c, checkpoints.front());
  const EvalReport rep = evaluate(*model, eval_classes(c, d.split), d.manifest, d.store, o);
  out << results_csv({rep});
  if (rep.auc) out << "auc," << *rep.auc << '\n';
  if (!c.out_dir.empty()) export_results({rep}, c.out_dir);
  return 0;
}

inline int cmd_sweep(const ExperimentConfig& c, const std::vector<std::string>& checkpoints,
                     std::ostream& out, std::ostream& err) {
  if (checkpoints.empty()) throw std::invalid_argument("sweep needs at least one --checkpoint");
  const LoadedData d = load_data(c);
  std::vector<std::unique_ptr<FewShotModel>> models;
  std::vector<SweepModel> entries;
  for (const auto& path : checkpoints) {
    models.push_back(load_for(c, path));
    const std::string name = checkpoints.size() == 1 ? model_label(c, path)
                                                     : std::filesystem::path(path).stem().string();
    entries.push_back({name, model_scorer(*models.back()), model_tags(models.back()->config())});
  }
  const SweepTable t =
      shot_sweep(entries, c.sweep_shots, eval_classes(c, d.split), d.manifest, d.store, eval_options(c));
  for (const auto& w : t.warnings) err << "warning: " << w << '\n';
  if (t.rows.empty()) throw std::invalid_argument("no feasible shot in the sweep");
  out << results_csv(t.rows);
  if (!c.out_dir.empty()) export_results(t.rows, c.out_dir, true);
  return 0;
}

/// Runs one command line (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fsed"};
  Flags f;
  build_app(app, f);
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << help_text();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << help_text();
    return 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const ExperimentConfig c = resolve_config(f);
    if (cmd != "eval" && cmd != "sweep" && !f.checkpoints.empty()) {
      throw std::invalid_argument("--checkpoint applies to eval and sweep only");
    }
    if (cmd == "prepare") return cmd_prepare(c, out);
    if (cmd == "train") return cmd_train(c, out);
    if (cmd == "eval") return cmd_eval(c, f.checkpoints, out);
    return cmd_sweep(c, f.checkpoints, out, err);
  } catch (const std::exception& e) {
    err << "error: " << cmd << ": " << e.what() << '\n';
    return 1;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace fsed::cli
