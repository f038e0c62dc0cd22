#include <gtest/gtest.h>

#include "support.hpp"
#include "vld/errors.hpp"
#include "vld/gradcheck.hpp"
#include "vld/vit.hpp"

namespace vld {
namespace {

using testing::probe;
using testing::random_tensor;

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.image_height = 8;
  c.image_width = 4;
  c.patch_size = 4;
  c.depth = 2;
  c.dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  return c;
}

TEST(EncoderConfig, CountsTokens) {
  EncoderConfig c;
  c.image_height = 288;
  c.image_width = 144;
  c.patch_size = 16;
  EXPECT_EQ(c.num_patches(), 162u);
  EXPECT_EQ(c.frame_tokens(), 163u);
  EXPECT_EQ(count_layer_tokens(c, true, 6), 169u);
  EXPECT_EQ(count_layer_tokens(c, false, 6), 163u);
  c.image_width = 150;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(VisionEncoder, EmbedUsesRasterPatchOrder) {
  auto c = tiny_encoder();
  Rng rng(1);
  VisionEncoder enc(c, rng);
  // Zero everything but a projection that reads the first value of each patch.
  for (auto& v : enc.patch_projection.weight.mutable_values()) v = 0;
  for (auto& v : enc.patch_projection.bias.mutable_values()) v = 0;
  for (auto& v : enc.pos_embedding.mutable_values()) v = 0;
  for (auto& v : enc.cls_token.mutable_values()) v = 7;
  enc.patch_projection.weight.mutable_values()[0] = 1.0;
  std::vector<double> px(8 * 4 * 3);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 4; ++x) px[(y * 4 + x) * 3] = static_cast<double>(10 * y + x);
  auto tokens = enc.embed(Tensor::from({1, 8, 4, 3}, px));
  ASSERT_EQ(tokens.shape(), (Shape{1, 3, 8}));
  EXPECT_EQ(tokens.at(0), 7.0);
  EXPECT_EQ(tokens.at(8), 0.0);    // patch (0,0) starts at pixel (0,0)
  EXPECT_EQ(tokens.at(16), 40.0);  // patch (1,0) starts at pixel (4,0)
}

TEST(VisionEncoder, RejectsWrongFrameSize) {
  Rng rng(2);
  VisionEncoder enc(tiny_encoder(), rng);
  EXPECT_THROW(enc.embed(Tensor::zeros({1, 4, 4, 3})), ConfigError);
}

TEST(VisionEncoder, FramesAreEncodedIndependently) {
  Rng rng(3);
  VisionEncoder enc(tiny_encoder(), rng);
  auto a = random_tensor({2, 8, 4, 3}, 4, false, 0, 1);
  auto b = random_tensor({2, 8, 4, 3}, 5, false, 0, 1);
  auto both = enc.encode_baseline(ops::concat({ops::slice(a, 0, 0, 1), ops::slice(b, 0, 1, 1)}, 0), 2);
  auto first = enc.encode_baseline(a, 2);
  for (std::size_t d = 0; d < 8; ++d) EXPECT_DOUBLE_EQ(both.frames.at(d), first.frames.at(d));
}

TEST(TemporalAveragePool, PermutationInvariant) {
  auto f = random_tensor({3, 5, 4}, 6, false);
  auto pooled = temporal_average_pool(f);
  auto shuffled = ops::concat({ops::slice(f, 1, 3, 2), ops::slice(f, 1, 0, 3)}, 1);
  auto again = temporal_average_pool(shuffled);
  EXPECT_LT(testing::max_abs_diff(pooled.values(), again.values()), 1e-15);
  EXPECT_DOUBLE_EQ(pooled.at(0), (f.at(0) + f.at(4) + f.at(8) + f.at(12) + f.at(16)) / 5);
}

TEST(TemporalAveragePool, RejectsEmptyTracklets) {
  EXPECT_THROW(temporal_average_pool(Tensor::zeros({2, 0, 3})), ShapeError);
  EXPECT_THROW(pool_frames(Tensor::zeros({5, 3}), 2), ShapeError);
  EXPECT_THROW(pool_frames(Tensor::zeros({4, 3}), 0), DataError);
}

TEST(TransformerBlock, FanInInitAndGradient) {
  Rng rng(7);
  auto block = TransformerBlock::init(8, 2, 4, rng, true);
  double s2 = 0;
  for (double v : block.fc2.weight.values()) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(block.fc2.weight.numel())), 1.0 / std::sqrt(32.0), 0.02);
  auto x = random_tensor({2, 3, 8}, 8);
  ParameterList params{{"x", x}};
  block.collect("block", params);
  auto report = check_gradients([&] { return probe(block.forward(x)); }, params);
  EXPECT_LT(report.max_relative_error(), 1e-4) << report.worst();
}

TEST(VisionEncoder, EndToEndGradient) {
  Rng rng(9);
  VisionEncoder enc(tiny_encoder(), rng);
  auto px = random_tensor({2, 8, 4, 3}, 10, false, 0, 1);
  ParameterList params;
  enc.collect(params);
  auto report = check_gradients([&] { return probe(enc.encode_baseline(px, 2).pooled); }, params);
  EXPECT_LT(report.max_relative_error(), 1e-4) << report.worst();
}

}  // namespace
}  // namespace vld
