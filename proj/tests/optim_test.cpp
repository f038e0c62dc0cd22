#include <gtest/gtest.h>

#include <cmath>

#include "vld/errors.hpp"
#include "vld/ops.hpp"
#include "vld/optim.hpp"

namespace vld {
namespace {

TEST(Adam, FirstStepsMatchHandComputation) {
  auto w = Tensor::from({2}, {1.0, -2.0}, true);
  Adam adam({{"w", w}}, {0.9, 0.999, 1e-8, 25.0});
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    adam.zero_grad();
    ops::sum_all(ops::mul(ops::square(w), Tensor::from({2}, {1.0, 3.0}))).backward();
    adam.step(0.1);
    const double g[2] = {2 * x[0], 6 * x[1]};
    for (int k = 0; k < 2; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      x[k] -= 0.1 * (m[k] / (1 - std::pow(0.9, t))) / (std::sqrt(v[k] / (1 - std::pow(0.999, t))) + 1e-8);
    }
    EXPECT_NEAR(w.at(0), x[0], 1e-15);
    EXPECT_NEAR(w.at(1), x[1], 1e-15);
  }
  EXPECT_EQ(adam.state().step_count, 3u);
}

TEST(Adam, PromptGroupUsesTheMultiplier) {
  auto a = Tensor::from({1}, {0.0}, true), b = Tensor::from({1}, {0.0}, true);
  Adam adam({{"base", a}, {"prompt", b, ParamGroup::kPrompt}});
  ops::sum_all(ops::add(a, b)).backward();
  adam.step(1e-3);
  // The first bias-corrected Adam step has magnitude lr.
  EXPECT_NEAR(a.at(0), -1e-3, 1e-10);
  EXPECT_NEAR(b.at(0), -25e-3, 1e-9);
}

TEST(Adam, Contracts) {
  EXPECT_THROW(Adam({{"frozen", Tensor::zeros({1})}}), ContractError);
  auto w = Tensor::zeros({1}, true);
  Adam adam({{"w", w}});
  EXPECT_THROW(adam.step(0.1), ContractError);
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 2.5e-5), 2.5e-5);
  EXPECT_NEAR(cosine_lr(50, 100, 2.5e-5), 1.25e-5, 1e-20);
  EXPECT_NEAR(cosine_lr(100, 100, 2.5e-5), 0.0, 1e-20);
  for (std::size_t s = 1; s <= 100; ++s) EXPECT_LE(cosine_lr(s, 100, 1.0), cosine_lr(s - 1, 100, 1.0));
  EXPECT_THROW(cosine_lr(0, 0, 1.0), ConfigError);
  EXPECT_THROW(cosine_lr(101, 100, 1.0), ContractError);
}

}  // namespace
}  // namespace vld
