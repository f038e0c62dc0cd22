#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vld/tensor.hpp"

namespace vld {

enum class ParamGroup { kBase, kPrompt };

struct NamedParameter {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::kBase;
};

using ParameterList = std::vector<NamedParameter>;

std::size_t count_elements(const ParameterList& params);
void zero_grads(ParameterList& params);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double prompt_lr_multiplier = 25.0;
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step_count = 0;
};

/// Adam with bias correction. The learning rate passed to step() is the
/// scheduled base rate; parameters in the prompt group use it times
/// prompt_lr_multiplier.
class Adam {
 public:
  Adam(ParameterList params, AdamConfig config = {});

  void step(double base_lr);
  void zero_grad();

  const ParameterList& parameters() const { return params_; }
  const OptimizerState& state() const { return state_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParameterList params_;
  AdamConfig config_;
  OptimizerState state_;
};

/// base_lr * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

}  // namespace vld
