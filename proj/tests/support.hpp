#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "fsed/autograd.hpp"
#include "fsed/data/manifest.hpp"
#include "fsed/data/spectrogram_store.hpp"
#include "fsed/ops.hpp"
#include "fsed/random.hpp"
#include "fsed/tensor.hpp"

namespace fsed::test {

using ag::Var;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform_real(rng, lo, hi);
  return t;
}

/// Manifest plus store of random spectrograms. Class c is shifted by
/// `separation * c` so classes are distinguishable when separation > 0.
struct ToyCorpus {
  data::DatasetManifest manifest;
  data::SpectrogramStore store;
  std::set<std::string> classes;
};

inline std::string toy_label(std::size_t c) { return "class" + std::to_string(c); }

inline ToyCorpus toy_corpus(std::size_t n_classes, std::size_t per_class, std::size_t mels,
                            std::size_t frames, std::uint64_t seed, double separation = 0.0) {
  ToyCorpus t;
  Rng rng(seed);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::string label = toy_label(c);
    t.classes.insert(label);
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::string id = label + "_" + std::to_string(k);
      t.manifest.entries.push_back({id, id + ".wav", label, 1.0});
      Tensor v = random_tensor({mels, frames}, rng);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += separation * static_cast<double>(c);
      t.store.insert({std::move(v), id});
    }
  }
  return t;
}

/// Compares the analytic gradient of sum(f(inputs) * w), w random, with
/// central differences for every input element.
inline void expect_gradients(const std::function<Var(const std::vector<Var>&)>& f,
                             std::vector<Tensor> inputs, double eps = 1e-6,
                             double rtol = 1e-5, double atol = 1e-7,
                             std::uint64_t seed = 99) {
  std::vector<Var> vars;
  for (auto& t : inputs) vars.emplace_back(t, true);
  Var out = f(vars);
  Rng rng(seed);
  const Tensor w = random_tensor(out.shape(), rng);
  auto objective = [&](const std::vector<Var>& vs) {
    ag::NoGradGuard guard;
    const Tensor y = f(vs).value();
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
  };
  ag::backward(out, &w);
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const Tensor analytic = vars[k].grad().empty() ? Tensor(vars[k].shape()) : vars[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Var> plus, minus;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        Tensor a = inputs[j], b = inputs[j];
        if (j == k) {
          a[i] += eps;
          b[i] -= eps;
        }
        plus.emplace_back(a);
        minus.emplace_back(b);
      }
      const double numeric = (objective(plus) - objective(minus)) / (2.0 * eps);
      const double tol = atol + rtol * std::max(std::abs(numeric), std::abs(analytic[i]));
      ASSERT_NEAR(analytic[i], numeric, tol) << "input " << k << " element " << i;
    }
  }
}

}  // namespace fsed::test
