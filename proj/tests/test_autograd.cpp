#include <gtest/gtest.h>

#include "support.hpp"

namespace fsed {
namespace {

using test::expect_gradients;
using test::random_tensor;
using ag::Var;

TEST(Autograd, ElementwiseOps) {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  expect_gradients([](const auto& v) { return ag::add(v[0], v[1]); }, {a, b});
  expect_gradients([](const auto& v) { return ag::sub(v[0], v[1]); }, {a, b});
  expect_gradients([](const auto& v) { return ag::mul(v[0], v[1]); }, {a, b});
  expect_gradients([](const auto& v) { return ag::scale(v[0], -2.5); }, {a});
  expect_gradients([](const auto& v) { return ag::sigmoid(v[0]); }, {a});
  expect_gradients([](const auto& v) { return ag::softplus(v[0]); }, {a});
  expect_gradients([](const auto& v) { return ag::exponential(v[0]); }, {a});
  expect_gradients([](const auto& v) { return ag::sum_all(v[0]); }, {a});
}

TEST(Autograd, ReluAwayFromKink) {
  Tensor a({2, 3}, std::vector<double>{-1.0, 0.5, 2.0, -0.3, 0.7, -2.0});
  expect_gradients([](const auto& v) { return ag::relu(v[0]); }, {a});
}

TEST(Autograd, ShapeOps) {
  Rng rng(2);
  Tensor a = random_tensor({4, 2, 3}, rng), b = random_tensor({2, 2, 3}, rng);
  expect_gradients([](const auto& v) { return ag::reshape(v[0], {8, 3}); }, {a});
  expect_gradients([](const auto& v) { return ag::slice0(v[0], 1, 3); }, {a});
  expect_gradients([](const auto& v) { return ag::concat0({v[0], v[1]}); }, {a, b});
  expect_gradients([](const auto& v) { return ag::group_mean(v[0], 2); }, {a});
  Tensor m({4, 2, 3}, 1.0);
  m[3] = 0.0;
  expect_gradients([m](const auto& v) { return ag::mask_mul(v[0], m); }, {a});
  expect_gradients([m](const auto& v) { return ag::add_const(v[0], m); }, {a});
}

TEST(Autograd, Conv2dWithAndWithoutBias) {
  Rng rng(3);
  Tensor x = random_tensor({2, 3, 5, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng),
         b = random_tensor({4}, rng);
  expect_gradients([](const auto& v) { return ag::conv2d(v[0], v[1], v[2], 1); }, {x, w, b});
  expect_gradients([](const auto& v) { return ag::conv2d(v[0], v[1], std::nullopt, 0); },
                   {x, w});
}

TEST(Autograd, BatchNormTrainingMode) {
  Rng rng(4);
  Tensor x = random_tensor({3, 2, 3, 4}, rng), g = random_tensor({2}, rng, 0.5, 1.5),
         b = random_tensor({2}, rng);
  expect_gradients(
      [](const auto& v) {
        ag::BatchNormState st(2);
        return ag::batch_norm(v[0], v[1], v[2], st, true);
      },
      {x, g, b}, 1e-6, 1e-5, 1e-7);
}

TEST(Autograd, BatchNormInferenceUsesRunningStatistics) {
  ag::BatchNormState st(1);
  st.running_mean[0] = 2.0;
  st.running_var[0] = 4.0;
  Var x(Tensor({1, 1, 1, 2}, std::vector<double>{2.0, 4.0}));
  Var g(Tensor({1}, 1.0)), b(Tensor({1}, 0.0));
  const Tensor y = ag::batch_norm(x, g, b, st, false).value();
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], 2.0 / std::sqrt(4.0 + st.eps), 1e-12);
  EXPECT_EQ(st.running_mean[0], 2.0);
}

TEST(Autograd, PoolingAndAttentionOps) {
  Rng rng(5);
  Tensor x = random_tensor({2, 3, 4, 6}, rng);
  expect_gradients([](const auto& v) { return ag::max_pool2d(v[0], 2); }, {x});
  expect_gradients([](const auto& v) { return ag::spatial_mean(v[0]); }, {x});
  expect_gradients([](const auto& v) { return ag::frame_mean(v[0]); }, {x});
  expect_gradients([](const auto& v) { return ag::channel_softmax(v[0]); }, {x});
  Tensor gc = random_tensor({2, 3}, rng), gt = random_tensor({2, 6}, rng);
  expect_gradients([](const auto& v) { return ag::scale_channels(v[0], v[1]); }, {x, gc});
  expect_gradients([](const auto& v) { return ag::scale_frames(v[0], v[1]); }, {x, gt});
  Tensor p = random_tensor({1, 3, 4, 6}, rng);
  expect_gradients([](const auto& v) { return ag::mul_broadcast0(v[0], v[1]); }, {x, p});
}

TEST(Autograd, LinearAndConv1d) {
  Rng rng(6);
  Tensor x = random_tensor({3, 4}, rng), w = random_tensor({2, 4}, rng), b = random_tensor({2}, rng);
  expect_gradients([](const auto& v) { return ag::linear(v[0], v[1], v[2]); }, {x, w, b});
  Tensor s = random_tensor({2, 7}, rng), k = random_tensor({5}, rng), kb = random_tensor({1}, rng);
  expect_gradients([](const auto& v) { return ag::conv1d_same(v[0], v[1], v[2]); }, {s, k, kb});
}

TEST(Autograd, GraphOps) {
  Rng rng(7);
  Tensor a = random_tensor({5, 3}, rng), b = random_tensor({4, 3}, rng);
  expect_gradients([](const auto& v) { return ag::pairwise_sqdist(v[0], v[1]); }, {a, b});
  Tensor s = random_tensor({5, 1}, rng, 0.5, 2.0);
  expect_gradients([](const auto& v) { return ag::div_rows(v[0], v[1]); }, {a, s});
  Tensor w = random_tensor({5, 5}, rng, 0.1, 1.0);
  expect_gradients([](const auto& v) { return ag::sym_max(v[0]); }, {w});
  expect_gradients([](const auto& v) { return ag::sym_normalize(v[0]); }, {w});
  Tensor y({5, 2});
  y.at(0, 0) = 1.0;
  y.at(1, 1) = 1.0;
  expect_gradients([y](const auto& v) { return ag::label_propagation(v[0], y, 0.7); },
                   {random_tensor({5, 5}, rng, 0.0, 0.2)});
  expect_gradients([](const auto& v) { return ag::row_normalize(v[0]); },
                   {random_tensor({3, 4}, rng, 0.5, 1.0)});
}

TEST(Autograd, SoftCrossEntropy) {
  Rng rng(8);
  Tensor logits = random_tensor({4, 3}, rng);
  Tensor t({4, 3});
  t.at(0, 0) = 1.0;
  t.at(1, 2) = 1.0;
  t.at(2, 1) = 0.3;
  t.at(2, 2) = 0.7;
  t.at(3, 0) = 1.0;
  expect_gradients([t](const auto& v) { return ag::soft_cross_entropy(v[0], t); }, {logits});
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Var a(Tensor({2}, 1.0), true);
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::scale(a, 2.0).requires_grad());
  }
  EXPECT_TRUE(ag::scale(a, 2.0).requires_grad());
}

TEST(Autograd, SharedInputAccumulatesGradient) {
  Var a(Tensor({1}, 3.0), true);
  ag::backward(ag::sum_all(ag::mul(a, a)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 6.0);
}

TEST(Autograd, LabelPropagationRejectsAlphaOne) {
  Var s(Tensor({2, 2}, std::vector<double>{0.0, 1.0, 1.0, 0.0}));
  Tensor y({2, 1});
  y[0] = 1.0;
  EXPECT_THROW(ag::label_propagation(s, y, 1.0), NumericError);
}

TEST(Autograd, SoftCrossEntropyRejectsNonFinite) {
  Var l(Tensor({1, 2}, std::vector<double>{std::nan(""), 0.0}));
  EXPECT_THROW(ag::soft_cross_entropy(l, Tensor({1, 2}, std::vector<double>{1.0, 0.0})),
               NumericError);
}

}  // namespace
}  // namespace fsed
