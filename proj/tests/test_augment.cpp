#include <gtest/gtest.h>

#include "fsed/augment.hpp"
#include "support.hpp"

namespace fsed {
namespace {

SpectrogramTensor ones(std::size_t mels, std::size_t frames) {
  return {Tensor({mels, frames}, 1.0), "x"};
}

bool in_rect(const MaskRect& m, std::size_t f, std::size_t t) {
  return (t >= m.t0 && t < m.t0 + m.t) || (f >= m.f0 && f < m.f0 + m.f);
}

TEST(Masks, ZeroExactlyTheLoggedStripes) {
  Rng rng(1);
  const MaskSpec ms{24, 36, 2};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<MaskRect> rects;
    const SpectrogramTensor out = apply_masks(ones(128, 157), ms, rng, &rects);
    ASSERT_EQ(rects.size(), 2u);
    for (const auto& m : rects) {
      EXPECT_LE(m.t, 24u);
      EXPECT_LE(m.f, 36u);
      EXPECT_LE(m.t0 + m.t, 157u);
      EXPECT_LE(m.f0 + m.f, 128u);
    }
    for (std::size_t f = 0; f < 128; ++f) {
      for (std::size_t t = 0; t < 157; ++t) {
        const bool masked = in_rect(rects[0], f, t) || in_rect(rects[1], f, t);
        ASSERT_EQ(out.values.at(f, t), masked ? 0.0 : 1.0);
      }
    }
  }
}

TEST(Masks, WidthsCoverFullRange) {
  Rng rng(2);
  std::set<std::size_t> widths;
  for (int i = 0; i < 2000; ++i) {
    std::vector<MaskRect> rects;
    apply_masks(ones(8, 10), {3, 2, 1}, rng, &rects);
    widths.insert(rects[0].t);
  }
  EXPECT_EQ(widths, (std::set<std::size_t>{0, 1, 2, 3}));
}

TEST(Masks, FullWidthStripeStartsAtZero) {
  Rng rng(3);
  std::vector<MaskRect> rects;
  for (int i = 0; i < 200; ++i) apply_masks(ones(4, 5), {5, 4, 1}, rng, &rects);
  for (const auto& m : rects) {
    if (m.t == 5) EXPECT_EQ(m.t0, 0u);
    if (m.f == 4) EXPECT_EQ(m.f0, 0u);
  }
}

TEST(Masks, RejectOversizedWidths) {
  Rng rng(4);
  EXPECT_THROW(apply_masks(ones(10, 20), {21, 2, 1}, rng), std::invalid_argument);
  EXPECT_THROW(apply_masks(ones(10, 20), {2, 11, 1}, rng), std::invalid_argument);
  EXPECT_NO_THROW(apply_masks(ones(10, 20), {20, 10, 1}, rng));
}

TEST(Mixup, ConvexCombination) {
  Rng rng(5);
  const SpectrogramTensor a{test::random_tensor({3, 4}, rng), "a"};
  const SpectrogramTensor b{test::random_tensor({3, 4}, rng), "b"};
  const auto ya = SoftLabel::one_hot(3, 0), yb = SoftLabel::one_hot(3, 2);
  const MixupSample m = mix_with_lambda(a, ya, b, yb, 0.3);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_NEAR(m.spec.values[i], 0.3 * a.values[i] + 0.7 * b.values[i], 1e-15);
  }
  EXPECT_EQ(m.label.probabilities, (std::vector<double>{0.3, 0.0, 0.7}));
  EXPECT_EQ(mix_with_lambda(a, ya, b, yb, 1.0).spec.values, a.values);
  EXPECT_EQ(mix_with_lambda(a, ya, b, yb, 0.0).spec.values, b.values);
}

TEST(Mixup, Errors) {
  const auto y = SoftLabel::one_hot(2, 0);
  EXPECT_THROW(mix_with_lambda(ones(2, 2), y, ones(2, 3), y, 0.5), std::invalid_argument);
  EXPECT_THROW(mix_with_lambda(ones(2, 2), y, ones(2, 2), SoftLabel::one_hot(3, 0), 0.5),
               std::invalid_argument);
  EXPECT_THROW(mix_with_lambda(ones(2, 2), y, ones(2, 2), y, 1.5), std::invalid_argument);
  Rng rng(6);
  MixupConfig bad;
  bad.alpha = 0.0;
  EXPECT_THROW(masked_mixup(ones(2, 2), y, ones(2, 2), y, bad, rng), std::invalid_argument);
}

TEST(Mixup, LambdaFollowsBeta) {
  Rng rng(7);
  const auto y0 = SoftLabel::one_hot(2, 0), y1 = SoftLabel::one_hot(2, 1);
  MixupConfig cfg;
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = masked_mixup(ones(1, 1), y0, ones(1, 1), y1, cfg, rng).lambda;
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    sum += l;
    sq += l * l;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.5, 0.01);
  EXPECT_NEAR(var, 1.0 / (4.0 * (2.0 * cfg.alpha + 1.0)), 0.01);
}

Episode toy_episode(std::uint64_t seed) {
  static const auto corpus = test::toy_corpus(5, 10, 16, 20, 11, 1.0);
  return sample_episode(corpus.classes, corpus.manifest, {5, 2, 3}, seed, corpus.store);
}

TEST(AugmentQuery, SlotsAreMixesOfDistinctPoolEntries) {
  const Episode ep = toy_episode(1);
  Rng rng(8);
  std::vector<AugmentRecord> log;
  const MaskSpec ms{4, 5, 2};
  MixupConfig mc;
  mc.num_masked_variants = 3;
  const Episode out = augment_query_set(ep, ms, mc, rng, &log);
  ASSERT_EQ(log.size(), ep.query.size());
  ASSERT_TRUE(out.query_soft_labels.has_value());
  const Tensor& soft = *out.query_soft_labels;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const AugmentRecord& r = log[i];
    EXPECT_NE(r.pool_a, r.pool_b);
    EXPECT_LT(std::max(r.pool_a, r.pool_b), ep.query.size() * 3);
    EXPECT_EQ(r.source_a, r.pool_a / 3);
    EXPECT_EQ(r.source_b, r.pool_b / 3);
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      double expect = 0.0;
      if (std::size_t(ep.query[r.source_a].label) == c) expect += r.lambda;
      if (std::size_t(ep.query[r.source_b].label) == c) expect += 1.0 - r.lambda;
      EXPECT_NEAR(soft.at(i, c), expect, 1e-12);
      total += soft.at(i, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    // Rebuild the slot from the logged masks and weight.
    auto masked = [&](std::size_t src, const std::vector<MaskRect>& rects, std::size_t f,
                      std::size_t t) {
      for (const auto& m : rects) {
        if (in_rect(m, f, t)) return 0.0;
      }
      return ep.query[src].spec.values.at(f, t);
    };
    for (std::size_t f = 0; f < 16; ++f) {
      for (std::size_t t = 0; t < 20; ++t) {
        const double want = r.lambda * masked(r.source_a, r.rects_a, f, t) +
                            (1.0 - r.lambda) * masked(r.source_b, r.rects_b, f, t);
        ASSERT_NEAR(out.query[i].spec.values.at(f, t), want, 1e-12);
      }
    }
  }
  for (std::size_t i = 0; i < ep.support.size(); ++i) {
    EXPECT_EQ(out.support[i].spec.values, ep.support[i].spec.values);
  }
  EXPECT_EQ(out.query_labels(), ep.query_labels());
}

TEST(AugmentQuery, MaskSupportMasksWithoutMixing) {
  const Episode ep = toy_episode(2);
  Rng rng(9);
  const Episode out = augment_query_set(ep, {20, 16, 1}, MixupConfig{}, rng, nullptr, true);
  bool changed = false;
  for (std::size_t i = 0; i < ep.support.size(); ++i) {
    const Tensor& a = ep.support[i].spec.values;
    const Tensor& b = out.support[i].spec.values;
    for (std::size_t k = 0; k < a.size(); ++k) {
      ASSERT_TRUE(b[k] == a[k] || b[k] == 0.0);
      changed |= b[k] != a[k];
    }
  }
  EXPECT_TRUE(changed);
}

TEST(AugmentQuery, DisabledIsIdentityAndSeededIsDeterministic) {
  const Episode ep = toy_episode(3);
  Rng rng(10);
  MixupConfig off;
  off.enabled = false;
  const Episode same = augment_query_set(ep, {4, 4, 2}, off, rng);
  EXPECT_FALSE(same.query_soft_labels.has_value());
  EXPECT_EQ(same.query[0].spec.values, ep.query[0].spec.values);

  Rng r1(11), r2(11);
  const Episode a = augment_query_set(ep, {4, 4, 2}, MixupConfig{}, r1);
  const Episode b = augment_query_set(ep, {4, 4, 2}, MixupConfig{}, r2);
  for (std::size_t i = 0; i < a.query.size(); ++i) EXPECT_EQ(a.query[i].spec.values, b.query[i].spec.values);
  EXPECT_EQ(*a.query_soft_labels, *b.query_soft_labels);
  EXPECT_EQ(a.query_targets(), *a.query_soft_labels);
}

}  // namespace
}  // namespace fsed
