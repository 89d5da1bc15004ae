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
 * @file config.hpp
 * @brief Experiment configuration and its flat text format.
 *
 * One `key = value` pair per line. `#` starts a comment, blank lines are
 * ignored, keys may appear once per file. Values are taken verbatim after
 * trimming. Booleans accept on/off, true/false, 1/0, yes/no.
 *
 *     seed = 7
 *     data.manifest = esc50/manifest.csv
 *     data.n_mels = 128
 *     task.n_way = 5
 *     model.head = tpn
 *     train.lr = 0.0001
 *
 * `ExperimentConfig::keys()` lists every key. Model input shape, way count
 * and init seed are derived from `data.*`, `task.n_way` and `seed`.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsed/augment.hpp"
#include "fsed/data/prepare.hpp"
#include "fsed/data/split.hpp"
#include "fsed/error.hpp"
#include "fsed/model.hpp"
#include "fsed/train.hpp"

namespace fsed {

namespace detail {
inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, data::detail::trim(item)));
  if (out.empty()) throw std::invalid_argument("'" + key + "' is empty");
  return out;
}
inline std::string size_list_text(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}
inline std::set<std::string> parse_name_set(const std::string& v) {
  std::set<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = data::detail::trim(item);
    if (!item.empty()) out.insert(item);
  }
  return out;
}
inline std::string name_set_text(const std::set<std::string>& xs) {
  std::string s;
  for (const auto& x : xs) s += (s.empty() ? "" : ",") + x;
  return s;
}
}  // namespace detail

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir;

  // data
  std::string manifest;
  std::string cache_dir;
  std::string noise_manifest;  // scene recordings for data.noise = mixed
  std::string domain_file;     // label,domain table for split.exclude_domain
  data::PrepareOptions prepare;

  // split
  data::SplitSpec split;
  std::string exclude_domain;
  std::string eval_split = "test";

  // episodes, shared by training and evaluation
  TaskConfig task;

  ModelConfig model;
  TrainConfig train;

  // evaluation
  std::size_t eval_episodes = 1000;
  bool eval_auc = false;
  std::vector<std::size_t> sweep_shots{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string model_name;

  /// Ordered key/value view. Parsing this text yields an equal config.
  std::vector<std::pair<std::string, std::string>> to_pairs() const {
    using namespace detail;
    const MelConfig& mel = prepare.mel;
    std::vector<std::pair<std::string, std::string>> kv = {
        {"seed", std::to_string(seed)},
        {"out", out_dir},
        {"data.manifest", manifest},
        {"data.cache_dir", cache_dir},
        {"data.noise_manifest", noise_manifest},
        {"data.domain_file", domain_file},
        {"data.sample_rate", std::to_string(mel.target_rate_hz)},
        {"data.n_mels", std::to_string(mel.n_mels)},
        {"data.window", std::to_string(mel.window_samples)},
        {"data.hop", std::to_string(mel.hop_samples)},
        {"data.log_floor", real_text(mel.log_floor)},
        {"data.fmin", real_text(mel.fmin_hz)},
        {"data.fmax", real_text(mel.fmax_hz)},
        {"data.clip_seconds", real_text(prepare.clip_seconds)},
        {"data.noise", data::to_string(prepare.noise)},
        {"data.snr_min_db", real_text(prepare.snr_min_db)},
        {"data.snr_max_db", real_text(prepare.snr_max_db)},
        {"split.train", std::to_string(split.n_train)},
        {"split.val", std::to_string(split.n_val)},
        {"split.test", std::to_string(split.n_test)},
        {"split.exclude", name_set_text(split.excluded)},
        {"split.exclude_domain", exclude_domain},
        {"split.domain_mismatch", bool_text(split.domain_mismatch)},
        {"task.n_way", std::to_string(task.n_way)},
        {"task.k_shot", std::to_string(task.k_shot)},
        {"task.queries_per_class", std::to_string(task.queries_per_class)},
    };
    for (const auto& [k, v] : model.to_pairs()) {
      if (!derived_model_key(k)) kv.emplace_back(k, v);
    }
    const std::vector<std::pair<std::string, std::string>> rest = {
        {"train.lr", real_text(train.learning_rate)},
        {"train.max_epochs", std::to_string(train.max_epochs)},
        {"train.lr_decay", real_text(train.lr_decay)},
        {"train.lr_schedule", to_string(train.lr_schedule)},
        {"train.lr_step_epochs", std::to_string(train.lr_step_epochs)},
        {"train.episodes_per_epoch", std::to_string(train.episodes_per_epoch)},
        {"train.val_episodes", std::to_string(train.val_episodes)},
        {"train.augmentation", bool_text(train.use_augmentation)},
        {"train.mask_support", bool_text(train.mask_support)},
        {"aug.time_param", std::to_string(train.masks.time_param)},
        {"aug.freq_param", std::to_string(train.masks.freq_param)},
        {"aug.num_masks", std::to_string(train.masks.num_masks)},
        {"aug.alpha", real_text(train.mixup.alpha)},
        {"aug.num_masked_variants", std::to_string(train.mixup.num_masked_variants)},
        {"eval.episodes", std::to_string(eval_episodes)},
        {"eval.split", eval_split},
        {"eval.auc", bool_text(eval_auc)},
        {"eval.shots", size_list_text(sweep_shots)},
        {"eval.name", model_name},
    };
    kv.insert(kv.end(), rest.begin(), rest.end());
    return kv;
  }

  static std::vector<std::string> keys() {
    std::vector<std::string> out;
    for (const auto& [k, v] : ExperimentConfig{}.to_pairs()) out.push_back(k);
    return out;
  }

  static bool derived_model_key(const std::string& key) {
    return key == "model.n_mels" || key == "model.n_frames" || key == "model.n_way" ||
           key == "model.init_seed";
  }

  /// Sets one key. Throws std::invalid_argument for unknown keys and bad
  /// values.
  void set(const std::string& key, const std::string& v) {
    using namespace detail;
    MelConfig& mel = prepare.mel;
    auto as_int = [&](const std::string& k) { return static_cast<int>(parse_size(k, v)); };
    if (key == "seed") seed = parse_u64(key, v);
    else if (key == "out") out_dir = v;
    else if (key == "data.manifest") manifest = v;
    else if (key == "data.cache_dir") cache_dir = v;
    else if (key == "data.noise_manifest") noise_manifest = v;
    else if (key == "data.domain_file") domain_file = v;
    else if (key == "data.sample_rate") mel.target_rate_hz = as_int(key);
    else if (key == "data.n_mels") mel.n_mels = as_int(key);
    else if (key == "data.window") mel.window_samples = as_int(key);
    else if (key == "data.hop") mel.hop_samples = as_int(key);
    else if (key == "data.log_floor") mel.log_floor = parse_real(key, v);
    else if (key == "data.fmin") mel.fmin_hz = parse_real(key, v);
    else if (key == "data.fmax") mel.fmax_hz = parse_real(key, v);
    else if (key == "data.clip_seconds") prepare.clip_seconds = parse_real(key, v);
    else if (key == "data.noise") prepare.noise = data::parse_noise_mode(v);
    else if (key == "data.snr_min_db") prepare.snr_min_db = parse_real(key, v);
    else if (key == "data.snr_max_db") prepare.snr_max_db = parse_real(key, v);
    else if (key == "split.train") split.n_train = parse_size(key, v);
    else if (key == "split.val") split.n_val = parse_size(key, v);
    else if (key == "split.test") split.n_test = parse_size(key, v);
    else if (key == "split.exclude") split.excluded = parse_name_set(v);
    else if (key == "split.exclude_domain") exclude_domain = v;
    else if (key == "split.domain_mismatch") split.domain_mismatch = parse_bool(key, v);
    else if (key == "task.n_way") task.n_way = parse_size(key, v);
    else if (key == "task.k_shot") task.k_shot = parse_size(key, v);
    else if (key == "task.queries_per_class") task.queries_per_class = parse_size(key, v);
    else if (key == "train.lr") train.learning_rate = parse_real(key, v);
    else if (key == "train.max_epochs") train.max_epochs = parse_size(key, v);
    else if (key == "train.lr_decay") train.lr_decay = parse_real(key, v);
    else if (key == "train.lr_schedule") train.lr_schedule = parse_lr_schedule(v);
    else if (key == "train.lr_step_epochs") train.lr_step_epochs = parse_size(key, v);
    else if (key == "train.episodes_per_epoch") train.episodes_per_epoch = parse_size(key, v);
    else if (key == "train.val_episodes") train.val_episodes = parse_size(key, v);
    else if (key == "train.augmentation") train.use_augmentation = parse_bool(key, v);
    else if (key == "train.mask_support") train.mask_support = parse_bool(key, v);
    else if (key == "aug.time_param") train.masks.time_param = parse_size(key, v);
    else if (key == "aug.freq_param") train.masks.freq_param = parse_size(key, v);
    else if (key == "aug.num_masks") train.masks.num_masks = parse_size(key, v);
    else if (key == "aug.alpha") train.mixup.alpha = parse_real(key, v);
    else if (key == "aug.num_masked_variants") train.mixup.num_masked_variants = parse_size(key, v);
    else if (key == "eval.episodes") eval_episodes = parse_size(key, v);
    else if (key == "eval.split") {
      if (v != "test" && v != "val" && v != "train") {
        throw std::invalid_argument("'eval.split' must be test, val or train, got '" + v + "'");
      }
      eval_split = v;
    }
    else if (key == "eval.auc") eval_auc = parse_bool(key, v);
    else if (key == "eval.shots") sweep_shots = parse_size_list(key, v);
    else if (key == "eval.name") model_name = v;
    else if (derived_model_key(key)) {
      throw std::invalid_argument("'" + key + "' is derived from data.*, task.n_way and seed");
    }
    else if (key.rfind("model.", 0) == 0 && model.set(key, v)) {}
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }

  /// `key=value`; the form taken by --set.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + kv + "'");
    set(data::detail::trim(kv.substr(0, eq)), data::detail::trim(kv.substr(eq + 1)));
  }

  /// Applies a config file on top of the current values.
  void merge(std::istream& in, const std::string& source = "config") {
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = data::detail::trim(line);
      if (line.empty()) continue;
      const auto where = source + ":" + std::to_string(line_no) + ": ";
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(where + "expected key = value");
      const std::string key = data::detail::trim(line.substr(0, eq));
      if (!seen.insert(key).second) throw ParseError(where + "duplicate key '" + key + "'");
      try {
        set(key, data::detail::trim(line.substr(eq + 1)));
      } catch (const std::invalid_argument& e) {
        throw ParseError(where + e.what());
      }
    }
  }

  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    merge(in, path.string());
  }

  std::string text() const {
    std::string s;
    for (const auto& [k, v] : to_pairs()) s += k + " = " + v + "\n";
    return s;
  }

  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    c.merge(in);
    return c;
  }

  std::size_t n_frames() const { return frame_count(prepare.clip_samples(), prepare.mel); }

  /// Model config with the input shape, way count and init seed filled in.
  ModelConfig model_config() const {
    ModelConfig m = model;
    m.n_mels = static_cast<std::size_t>(prepare.mel.n_mels);
    m.n_frames = n_frames();
    m.n_way = task.n_way;
    m.init_seed = derive_seed(seed, "model");
    return m;
  }

  /// Train config with the episode shape and seed filled in.
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.task = task;
    t.seed = derive_seed(seed, "train");
    return t;
  }

  data::PrepareOptions prepare_options() const {
    data::PrepareOptions p = prepare;
    p.seed = derive_seed(seed, "prepare");
    return p;
  }

  data::SplitSpec split_spec() const {
    data::SplitSpec s = split;
    s.seed = derive_seed(seed, "split");
    return s;
  }

  std::uint64_t eval_seed() const { return derive_seed(seed, "eval"); }
};

}  // namespace fsed
