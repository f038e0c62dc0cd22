#include "vld/optim.hpp"

#include <cmath>

#include "vld/errors.hpp"

namespace vld {

std::size_t count_elements(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

void zero_grads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) {
      throw ContractError("optimizer parameter '" + p.name + "' does not require a gradient");
    }
    state_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    state_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(double base_lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) {
      throw ContractError("optimizer parameter '" + p.name + "' has no gradient");
    }
  }
  ++state_.step_count;
  const double t = static_cast<double>(state_.step_count);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    double lr = base_lr * (p.group == ParamGroup::kPrompt ? config_.prompt_lr_multiplier : 1.0);
    auto w = p.tensor.mutable_values();
    auto g = p.tensor.grad();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
    }
  }
}

void Adam::zero_grad() { zero_grads(params_); }

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0) throw ConfigError("cosine_lr: total_steps must be positive");
  if (step > total_steps) {
    throw ContractError("cosine_lr: step " + std::to_string(step) + " exceeds total " +
                        std::to_string(total_steps));
  }
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(M_PI * frac)) / 2.0;
}

}  // namespace vld
