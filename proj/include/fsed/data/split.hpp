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

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsed/data/manifest.hpp"
#include "fsed/random.hpp"

namespace fsed::data {

/// Class-disjoint meta-splits.
struct ClassSplit {
  std::set<std::string> train_classes;
  std::set<std::string> val_classes;
  std::set<std::string> test_classes;

  bool disjoint() const {
    auto none = [](const std::set<std::string>& a, const std::set<std::string>& b) {
      return std::none_of(a.begin(), a.end(),
                          [&](const std::string& c) { return b.count(c) > 0; });
    };
    return none(train_classes, val_classes) && none(train_classes, test_classes) &&
           none(val_classes, test_classes);
  }
};

struct SplitSpec {
  std::size_t n_train = 35;
  std::size_t n_val = 5;
  std::size_t n_test = 10;
  std::uint64_t seed = 0;
  /// Classes never used for training or validation.
  std::set<std::string> excluded;
  /// When set, the test split is exactly the excluded classes. Otherwise
  /// excluded classes are dropped from every split.
  bool domain_mismatch = false;
};

/// Seeded class partition. Classes are shuffled from their sorted order so
/// the result depends only on the label set and the seed.
inline ClassSplit split_classes(const DatasetManifest& manifest, const SplitSpec& spec) {
  std::vector<std::string> all = manifest.classes();
  std::sort(all.begin(), all.end());
  for (const auto& c : spec.excluded) {
    if (!std::binary_search(all.begin(), all.end(), c)) {
      throw std::invalid_argument("split_classes: excluded class '" + c +
                                  "' is not in the manifest");
    }
  }
  std::vector<std::string> pool;
  for (const auto& c : all) {
    if (!spec.excluded.count(c)) pool.push_back(c);
  }
  const std::size_t n_test = spec.domain_mismatch ? 0 : spec.n_test;
  const std::size_t wanted = spec.n_train + spec.n_val + n_test;
  if (wanted > pool.size()) {
    throw std::invalid_argument(
        "split_classes: requested " + std::to_string(wanted) +
        " classes but only " + std::to_string(pool.size()) + " are available");
  }
  if (spec.domain_mismatch && spec.excluded.empty()) {
    throw std::invalid_argument("split_classes: domain-mismatch mode needs excluded classes");
  }
  Rng rng(derive_seed(spec.seed, "split"));
  std::shuffle(pool.begin(), pool.end(), rng);
  ClassSplit out;
  auto it = pool.begin();
  out.train_classes.insert(it, it + static_cast<long>(spec.n_train));
  it += static_cast<long>(spec.n_train);
  out.val_classes.insert(it, it + static_cast<long>(spec.n_val));
  it += static_cast<long>(spec.n_val);
  if (spec.domain_mismatch) {
    out.test_classes = spec.excluded;
  } else {
    out.test_classes.insert(it, it + static_cast<long>(n_test));
  }
  return out;
}

}  // namespace fsed::data
