#include <gtest/gtest.h>

#include "fsed/nn/encoder.hpp"
#include "support.hpp"

namespace fsed::nn {
namespace {

TEST(Encoder, ThreeBlockPresetShape) {
  ParameterSet ps;
  Rng rng(1);
  const Encoder enc(EncoderConfig::three_block_preset(), ps, rng);
  ag::NoGradGuard guard;
  Rng data(2);
  const Var out = enc.forward(Var(test::random_tensor({10, 1, 128, 157}, data)), false);
  EXPECT_EQ(out.shape(), (Shape{10, 128, 16, 19}));
  EXPECT_EQ(EncoderConfig::three_block_preset().output_shape(128, 157), (Shape{128, 16, 19}));
}

TEST(Encoder, FiveBlockPresetShape) {
  EXPECT_EQ(EncoderConfig::five_block_preset().output_shape(128, 157), (Shape{128, 2, 2}));
  EXPECT_EQ(EncoderConfig::uniform(3, 16).output_shape(64, 32), (Shape{16, 8, 4}));
}

TEST(Encoder, ShapeErrors) {
  EXPECT_THROW(EncoderConfig::three_block_preset().output_shape(4, 157), ShapeError);
  ParameterSet ps;
  Rng rng(3);
  const Encoder enc(EncoderConfig::uniform(2, 4), ps, rng);
  EXPECT_THROW(enc.forward(Var(Tensor({2, 2, 8, 8})), false), ShapeError);
  EXPECT_THROW(enc.forward(Var(Tensor({2, 8, 8})), false), ShapeError);
  EXPECT_THROW(enc.forward(Var(Tensor({2, 1, 2, 8})), false), ShapeError);
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig c = EncoderConfig::uniform(2, 4);
  c.kernel = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = EncoderConfig::uniform(2, 4);
  c.blocks[1].pool = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.blocks.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Encoder, ZeroInputGivesZeroMaps) {
  ParameterSet ps;
  Rng rng(4);
  const Encoder enc(EncoderConfig::uniform(3, 8), ps, rng);
  ag::NoGradGuard guard;
  for (bool training : {true, false}) {
    const Var out = enc.forward(Var(Tensor({3, 1, 16, 24})), training);
    for (std::size_t i = 0; i < out.value().size(); ++i) ASSERT_EQ(out.value()[i], 0.0);
  }
}

TEST(Encoder, AttentionGatesAreProbabilities) {
  ParameterSet ps;
  Rng rng(5);
  ChannelAttentionParams ca{ps.add_uniform("a", {2, 8}, 8, rng), ps.add_uniform("b", {2}, 8, rng),
                            ps.add_uniform("c", {8, 2}, 2, rng), ps.add_uniform("d", {8}, 2, rng)};
  TemporalAttentionParams ta{ps.add_uniform("k", {5}, 5, rng), ps.add_uniform("kb", {1}, 5, rng)};
  const Var fm(test::random_tensor({3, 8, 4, 6}, rng, -3.0, 3.0));
  const Tensor cg = channel_gates(fm, ca).value();
  const Tensor tg = temporal_gates(fm, ta).value();
  EXPECT_EQ(cg.shape(), (Shape{3, 8}));
  EXPECT_EQ(tg.shape(), (Shape{3, 6}));
  for (std::size_t i = 0; i < cg.size(); ++i) EXPECT_TRUE(cg[i] > 0.0 && cg[i] < 1.0);
  for (std::size_t i = 0; i < tg.size(); ++i) EXPECT_TRUE(tg[i] > 0.0 && tg[i] < 1.0);
  const Tensor out = temporal_attention(fm, ta).value();
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(out.at(1, c, 2, 3), fm.value().at(1, c, 2, 3) * tg.at(1, 3), 1e-15);
  }
}

TEST(Encoder, AttentionSwitchControlsParameters) {
  ParameterSet with, without;
  Rng r1(6), r2(6);
  EncoderConfig c = EncoderConfig::uniform(2, 8);
  Encoder a(c, with, r1);
  c.attention = false;
  Encoder b(c, without, r2);
  EXPECT_EQ(with.size(), 2 * 3 + 2 * 6);
  EXPECT_EQ(without.size(), 2 * 3);
  EXPECT_TRUE(with.contains("encoder.block1.channel_att.fc2.weight"));
  EXPECT_TRUE(with.contains("encoder.block0.temporal_att.weight"));
}

TEST(Encoder, InferenceIsPerSample) {
  ParameterSet ps;
  Rng rng(7);
  const Encoder enc(EncoderConfig::uniform(2, 4), ps, rng);
  Rng data(8);
  const Tensor batch = test::random_tensor({4, 1, 8, 8}, data);
  enc.forward(Var(batch), true);  // moves the running statistics
  ag::NoGradGuard guard;
  const Tensor all = enc.forward(Var(batch), false).value();
  Tensor first({1, 1, 8, 8});
  std::copy(batch.data(), batch.data() + 64, first.data());
  const Tensor one = enc.forward(Var(first), false).value();
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_NEAR(one[i], all[i], 1e-12);
}

TEST(Encoder, InputGradientMatchesFiniteDifferences) {
  ParameterSet ps;
  Rng rng(9);
  EncoderConfig c = EncoderConfig::uniform(2, 4);
  c.reduction = 2;
  const Encoder enc(c, ps, rng);
  Rng data(10);
  test::expect_gradients([&](const std::vector<Var>& v) { return enc.forward(v[0], true); },
                         {test::random_tensor({2, 1, 8, 8}, data)}, 1e-6, 1e-4, 1e-7);
}

}  // namespace
}  // namespace fsed::nn
