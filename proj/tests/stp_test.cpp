#include <gtest/gtest.h>

#include "support.hpp"
#include "vld/errors.hpp"
#include "vld/gradcheck.hpp"
#include "vld/stp.hpp"

namespace vld {
namespace {

using testing::bit_equal;
using testing::probe;
using testing::random_tensor;

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.image_height = 8;
  c.image_width = 4;
  c.patch_size = 4;
  c.depth = 3;
  c.dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  return c;
}

struct Fixture {
  VisionEncoder encoder;
  HubState hub;

  explicit Fixture(std::size_t insertion, std::size_t T = 3) : encoder(make_encoder()), hub(make_hub(T, insertion)) {}

  static VisionEncoder make_encoder() {
    Rng rng(1);
    return VisionEncoder(tiny_encoder(), rng);
  }
  static HubState make_hub(std::size_t T, std::size_t insertion) {
    Rng rng(2);
    auto h = HubState::init(T, 8, insertion, rng);
    // A larger spread than the default makes hub effects easy to see.
    for (auto& v : h.hub.mutable_values()) v *= 25;
    return h;
  }
};

TEST(HubState, ParameterCount) {
  Rng rng(3);
  EXPECT_EQ(HubState::init(2, 2, 0, rng).hub.numel(), 8u);
  EXPECT_EQ(HubState::init(6, 768, 9, rng).hub.numel(), 27648u);
}

TEST(Hub, AttachPlacesRowsPerFrame) {
  Rng rng(4);
  auto hub = HubState::init(2, 3, 0, rng);
  auto tokens = random_tensor({4, 5, 3}, 5, false);  // 2 tracklets of 2 frames
  auto vh = attach_hub(tokens, hub);
  ASSERT_EQ(vh.tokens.shape(), (Shape{4, 7, 3}));
  // Frame t of every tracklet carries H[t, :].
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t d = 0; d < 3; ++d) {
        const std::size_t t = f % 2;
        EXPECT_EQ(vh.tokens.at((f * 7 + 5 + j) * 3 + d), hub.hub.at((t * 2 + j) * 3 + d));
      }
}

TEST(Hub, TransposeSwapsTemporalAndSlotAxes) {
  Rng rng(6);
  auto hub = HubState::init(3, 2, 0, rng);
  auto vh = attach_hub(random_tensor({3, 2, 2}, 7, false), hub);
  auto t = hub_transpose(vh);
  EXPECT_TRUE(t.transposed);
  auto a = vh.hub_part(), b = t.hub_part();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(b.at((i * 3 + j) * 2 + d), a.at((j * 3 + i) * 2 + d));
  EXPECT_TRUE(bit_equal(t.frame_part().values(), vh.frame_part().values()));
}

TEST(Hub, TransposeIsAnInvolution) {
  Rng rng(8);
  for (std::size_t T : {1u, 2u, 4u, 5u}) {
    auto hub = HubState::init(T, 3, 0, rng);
    auto vh = attach_hub(random_tensor({2 * T, 4, 3}, 9 + T, false), hub);
    auto twice = hub_transpose(hub_transpose(vh));
    EXPECT_FALSE(twice.transposed);
    EXPECT_TRUE(bit_equal(twice.tokens.values(), vh.tokens.values())) << "T=" << T;
  }
}

TEST(Hub, ScheduleAlternatesFromInsertion) {
  using O = HubOrientation;
  EXPECT_EQ(hub_schedule(5, 2), (std::vector<O>{O::kAbsent, O::kAbsent, O::kOriginal, O::kTransposed, O::kOriginal}));
  EXPECT_EQ(hub_schedule(3, 3), (std::vector<O>(3, O::kAbsent)));
}

TEST(Hub, RejectsIncompleteTracklets) {
  Rng rng(10);
  auto hub = HubState::init(3, 2, 0, rng);
  EXPECT_THROW(attach_hub(Tensor::zeros({4, 2, 2}), hub), ConfigError);
}

TEST(Hub, InsertionAtDepthIsExactlyTheBaseline) {
  Fixture fx(3);
  auto px = random_tensor({6, 8, 4, 3}, 11, false, 0, 1);
  auto with = encode_with_hub(fx.encoder, px, 3, fx.hub);
  auto base = fx.encoder.encode_baseline(px, 3);
  EXPECT_TRUE(bit_equal(with.feature.pooled.values(), base.pooled.values()));
  EXPECT_TRUE(bit_equal(with.feature.frames.values(), base.frames.values()));
}

TEST(Hub, ChangesFeaturesWhenActive) {
  Fixture fx(1);
  auto px = random_tensor({3, 8, 4, 3}, 12, false, 0, 1);
  auto with = encode_with_hub(fx.encoder, px, 3, fx.hub);
  auto base = fx.encoder.encode_baseline(px, 3);
  EXPECT_GT(testing::max_abs_diff(with.feature.pooled.values(), base.pooled.values()), 1e-6);
  EXPECT_EQ(with.final_tokens.tokens.shape(), (Shape{3, 3 + 3, 8}));
}

// d(frame-0 CLS) / d(pixels of the other frames): nonzero only through the hub.
double cross_frame_gradient(std::size_t insertion) {
  Fixture fx(insertion);
  auto px = random_tensor({3, 8, 4, 3}, 13, true, 0, 1);
  auto enc = encode_with_hub(fx.encoder, px, 3, fx.hub);
  probe(ops::slice(enc.feature.frames, 1, 0, 1)).backward();
  double other = 0;
  const std::size_t per_frame = 8 * 4 * 3;
  for (std::size_t i = per_frame; i < 3 * per_frame; ++i) other += std::abs(px.grad()[i]);
  double own = 0;
  for (std::size_t i = 0; i < per_frame; ++i) own += std::abs(px.grad()[i]);
  EXPECT_GT(own, 0.0);
  return other;
}

TEST(Hub, CrossFrameGradientFlowsOnlyThroughTheHub) {
  EXPECT_GT(cross_frame_gradient(0), 1e-8);
  EXPECT_GT(cross_frame_gradient(1), 1e-8);
  EXPECT_EQ(cross_frame_gradient(3), 0.0);
}

TEST(Hub, OneHubLayerKeepsFramesSeparate) {
  // Hub rows of frame t only see frame t until a transposed layer follows.
  Fixture fx(2);
  auto px = random_tensor({3, 8, 4, 3}, 14, true, 0, 1);
  auto enc = encode_with_hub(fx.encoder, px, 3, fx.hub);
  probe(ops::slice(enc.feature.frames, 1, 0, 1)).backward();
  double other = 0;
  for (std::size_t i = 96; i < 288; ++i) other += std::abs(px.grad()[i]);
  EXPECT_EQ(other, 0.0);
}

TEST(Hub, FlattenIsRasterOverFrameAndRow) {
  Rng rng(15);
  auto hub = HubState::init(2, 3, 0, rng);
  auto vh = attach_hub(random_tensor({2, 1, 3}, 16, false), hub);
  auto flat = flatten_hub(vh);
  ASSERT_EQ(flat.shape(), (Shape{1, 4, 3}));
  EXPECT_TRUE(bit_equal(flat.values(), hub.hub.values()));
}

TEST(Sta, ShapesAndAttentionRows) {
  Rng rng(17);
  auto sta = StaWeights::init(8, 2, rng);
  auto cls = random_tensor({2, 3, 8}, 18, false);
  auto flat = random_tensor({2, 9, 8}, 19, false);
  auto out = sta_aggregate(cls, flat, sta);
  EXPECT_EQ(out.frames.shape(), (Shape{2, 3, 8}));
  EXPECT_EQ(out.pooled.shape(), (Shape{2, 8}));
  ASSERT_EQ(out.attention.shape(), (Shape{4, 3, 9}));
  for (std::size_t r = 0; r < 12; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 9; ++k) s += out.attention.at(r * 9 + k);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  EXPECT_THROW(sta_aggregate(cls, random_tensor({3, 9, 8}, 20, false), sta), ShapeError);
}

TEST(Sta, ParameterCountMatchesClosedForm) {
  Rng rng(21);
  auto sta = StaWeights::init(768, 12, rng);
  ParameterList p;
  sta.collect("sta", p);
  EXPECT_EQ(count_elements(p), 4u * 768 * 768 + 4 * 768 + 2 * 768);
}

TEST(Sta, GradientCheck) {
  Rng rng(22);
  auto sta = StaWeights::init(4, 2, rng);
  auto cls = random_tensor({2, 2, 4}, 23), flat = random_tensor({2, 4, 4}, 24);
  ParameterList params{{"cls", cls}, {"hub", flat}};
  sta.collect("sta", params);
  auto report = check_gradients([&] { return probe(sta_aggregate(cls, flat, sta).pooled); }, params);
  EXPECT_LT(report.max_relative_error(), 1e-4) << report.worst();
}

TEST(Hub, EncoderWithHubGradientCheck) {
  Fixture fx(1, 2);
  auto px = random_tensor({2, 8, 4, 3}, 25, false, 0, 1);
  ParameterList params{{"hub", fx.hub.hub}};
  fx.encoder.collect(params);
  auto report = check_gradients(
      [&] {
        auto enc = encode_with_hub(fx.encoder, px, 2, fx.hub);
        return ops::add(probe(enc.feature.pooled), probe(flatten_hub(enc.final_tokens), 5));
      },
      params);
  EXPECT_LT(report.max_relative_error(), 1e-4) << report.worst();
}

}  // namespace
}  // namespace vld
