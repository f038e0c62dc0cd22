#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "vld/gradcheck.hpp"
#include "vld/layers.hpp"
#include "vld/ops.hpp"

namespace vld {
namespace {

using testing::probe;
using testing::random_tensor;

AttentionWeights make_attention(std::size_t dim, std::size_t heads, std::uint64_t seed) {
  Rng rng(seed);
  return AttentionWeights::init(dim, heads, rng, 0.4, true);
}

TEST(Attention, WeightRowsSumToOne) {
  auto w = make_attention(8, 2, 1);
  auto q = random_tensor({3, 4, 8}, 2, false), kv = random_tensor({3, 6, 8}, 3, false);
  auto r = multi_head_attention(q, kv, kv, w);
  EXPECT_EQ(r.output.shape(), (Shape{3, 4, 8}));
  ASSERT_EQ(r.weights.shape(), (Shape{6, 4, 6}));
  for (std::size_t row = 0; row < 6 * 4; ++row) {
    double total = 0;
    for (std::size_t k = 0; k < 6; ++k) total += r.weights.at(row * 6 + k);
    EXPECT_NEAR(total, 1.0, 1e-14);
  }
}

TEST(Attention, SingleHeadMatchesScalarArithmetic) {
  const std::size_t D = 3, Lq = 2, Lk = 3;
  auto w = make_attention(D, 1, 4);
  auto q = random_tensor({Lq, D}, 5, false), k = random_tensor({Lk, D}, 6, false), v = random_tensor({Lk, D}, 7, false);
  auto proj = [&](const Tensor& x, const Linear& l, std::size_t rows) {
    std::vector<double> out(rows * D);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < D; ++o) {
        double s = l.bias.at(o);
        for (std::size_t i = 0; i < D; ++i) s += x.at(r * D + i) * l.weight.at(i * D + o);
        out[r * D + o] = s;
      }
    return out;
  };
  auto Q = proj(q, w.query, Lq), K = proj(k, w.key, Lk), V = proj(v, w.value, Lk);
  std::vector<double> mixed(Lq * D, 0.0);
  for (std::size_t i = 0; i < Lq; ++i) {
    std::vector<double> s(Lk);
    double mx = -1e300, z = 0;
    for (std::size_t j = 0; j < Lk; ++j) {
      s[j] = 0;
      for (std::size_t d = 0; d < D; ++d) s[j] += Q[i * D + d] * K[j * D + d];
      s[j] /= std::sqrt(static_cast<double>(D));
      mx = std::max(mx, s[j]);
    }
    for (auto& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < Lk; ++j)
      for (std::size_t d = 0; d < D; ++d) mixed[i * D + d] += s[j] / z * V[j * D + d];
  }
  auto expect = proj(Tensor::from({Lq, D}, mixed), w.output, Lq);
  auto got = multi_head_attention(q, k, v, w).output;
  for (std::size_t i = 0; i < Lq * D; ++i) EXPECT_NEAR(got.at(i), expect[i], 1e-13);
}

TEST(Attention, GradientCheck) {
  auto w = make_attention(6, 3, 8);
  auto q = random_tensor({2, 3, 6}, 9), kv = random_tensor({2, 4, 6}, 10);
  ParameterList params{{"q", q}, {"kv", kv}};
  w.collect("attn", params);
  auto report = check_gradients([&] { return probe(multi_head_attention(q, kv, kv, w).output); }, params);
  EXPECT_LT(report.max_relative_error(), 1e-4) << report.worst();
}

TEST(Attention, KeyBiasHasNoEffect) {
  auto w = make_attention(4, 2, 11);
  auto q = random_tensor({3, 4}, 12, false), kv = random_tensor({5, 4}, 13, false);
  auto before = multi_head_attention(q, kv, kv, w).output;
  auto kb = w.key.bias.mutable_values();
  for (auto& b : kb) b += 3.0;
  auto after = multi_head_attention(q, kv, kv, w).output;
  EXPECT_LT(testing::max_abs_diff(before.values(), after.values()), 1e-12);
}

TEST(Linear, ForwardAndGradient) {
  Rng rng(14);
  auto l = Linear::init(3, 2, rng, 0.5, true);
  auto x = random_tensor({4, 3}, 15);
  auto y = l(x);
  EXPECT_EQ(y.shape(), (Shape{4, 2}));
  ParameterList params{{"x", x}};
  l.collect("lin", params);
  EXPECT_EQ(params.size(), 3u);
  auto report = check_gradients([&] { return probe(l(x)); }, params);
  EXPECT_LT(report.max_relative_error(), 1e-4) << report.worst();
}

TEST(Linear, FrozenWeightsGetNoGradient) {
  Rng rng(16);
  auto l = Linear::init(3, 2, rng, 0.5, false);
  auto x = random_tensor({2, 3}, 17);
  probe(l(x)).backward();
  EXPECT_FALSE(l.weight.requires_grad());
  EXPECT_FALSE(l.weight.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(LayerNormModule, StartsAsIdentityAffine) {
  auto ln = LayerNorm::init(5, true);
  for (double g : ln.gain.values()) EXPECT_EQ(g, 1.0);
  for (double b : ln.bias.values()) EXPECT_EQ(b, 0.0);
}

TEST(GaussianInit, MatchesRequestedSpread) {
  Rng rng(18);
  auto t = gaussian_tensor({200, 100}, 0.02, rng, false);
  double s = 0, s2 = 0;
  for (double v : t.values()) {
    s += v;
    s2 += v * v;
  }
  const double n = 20000;
  EXPECT_NEAR(s / n, 0.0, 0.001);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.02, 0.0005);
}

}  // namespace
}  // namespace vld
