#include <gtest/gtest.h>

#include "fsed/nn/task_adaptive.hpp"
#include "support.hpp"

namespace fsed::nn {
namespace {

TaskAdaptiveConfig small_ta(std::size_t m2 = 4, std::size_t m3 = 5) {
  TaskAdaptiveConfig c;
  c.m2 = m2;
  c.m3 = m3;
  c.reshaper_m3 = m3;
  return c;
}

TEST(TaskAdaptive, MaskSumsToOneOverChannels) {
  ParameterSet ps;
  Rng rng(1);
  const TaskAdaptive ta(small_ta(), 6, 3, ps, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const Var maps(test::random_tensor({3 * 2, 6, 4, 5}, rng, -2.0, 2.0));
    const Tensor p = ta.mask(maps, 2).value();
    ASSERT_EQ(p.shape(), (Shape{1, 5, 4, 5}));
    for (std::size_t h = 0; h < 4; ++h) {
      for (std::size_t w = 0; w < 5; ++w) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
          EXPECT_GT(p.at(0, c, h, w), 0.0);
          s += p.at(0, c, h, w);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(TaskAdaptive, TaeAveragesShots) {
  ParameterSet ps;
  Rng rng(2);
  const TaskAdaptive ta(small_ta(), 3, 2, ps, rng);
  const Tensor maps = test::random_tensor({4, 3, 3, 3}, rng);
  const Tensor o = ta.tae(Var(maps), 2, 2).value();
  const Tensor each = ta.tae(Var(maps), 4, 1).value();
  ASSERT_EQ(o.shape(), (Shape{2, 4, 3, 3}));
  const std::size_t per = 4 * 9;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      EXPECT_NEAR(o[c * per + i], 0.5 * (each[2 * c * per + i] + each[(2 * c + 1) * per + i]), 1e-14);
    }
  }
}

TEST(TaskAdaptive, MaskIgnoresShotOrderWithinClass) {
  ParameterSet ps;
  Rng rng(3);
  const TaskAdaptive ta(small_ta(), 3, 2, ps, rng);
  const Tensor maps = test::random_tensor({4, 3, 3, 3}, rng);
  Tensor swapped = maps;
  const std::size_t per = 27;
  std::swap_ranges(swapped.data(), swapped.data() + per, swapped.data() + per);
  const Tensor a = ta.mask(Var(maps), 2).value(), b = ta.mask(Var(swapped), 2).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(TaskAdaptive, ProjectorIsBoundToN) {
  ParameterSet ps;
  Rng rng(4);
  const TaskAdaptive ta(small_ta(), 3, 3, ps, rng);
  EXPECT_EQ(ps.get("task_adaptive.projector.weight").shape(), (Shape{5, 12, 1, 1}));
  EXPECT_THROW(ta.mask(Var(test::random_tensor({2, 3, 3, 3}, rng)), 1), ShapeError);
  EXPECT_THROW(ta.tae(Var(test::random_tensor({5, 3, 3, 3}, rng)), 3, 2), ShapeError);
}

TEST(TaskAdaptive, ReshaperMustMatchProjector) {
  ParameterSet ps;
  Rng rng(5);
  TaskAdaptiveConfig c = small_ta();
  c.reshaper_m3 = 7;
  EXPECT_THROW(TaskAdaptive(c, 3, 2, ps, rng), std::invalid_argument);
  c = small_ta(0, 5);
  EXPECT_THROW(TaskAdaptive(c, 3, 2, ps, rng), std::invalid_argument);
}

TEST(TaskAdaptive, MaskBroadcastsOverBatch) {
  Rng rng(6);
  const Tensor p = test::random_tensor({1, 2, 3, 3}, rng);
  const Tensor r = test::random_tensor({4, 2, 3, 3}, rng);
  const Tensor out = apply_task_mask(Var(p), Var(r)).value();
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_DOUBLE_EQ(out.at(b, c, 1, 2), r.at(b, c, 1, 2) * p.at(0, c, 1, 2));
    }
  }
}

TEST(TaskAdaptive, GradientsThroughMaskAndReshaper) {
  ParameterSet ps;
  Rng rng(7);
  const TaskAdaptive ta(small_ta(3, 3), 2, 2, ps, rng);
  test::expect_gradients(
      [&](const std::vector<Var>& v) {
        return apply_task_mask(ta.mask(v[0], 2), ta.reshape_features(v[1]));
      },
      {test::random_tensor({4, 2, 3, 3}, rng), test::random_tensor({3, 2, 3, 3}, rng)}, 1e-6,
      1e-5, 1e-8);
}

}  // namespace
}  // namespace fsed::nn
