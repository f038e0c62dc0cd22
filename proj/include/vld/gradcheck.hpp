#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vld/optim.hpp"
#include "vld/tensor.hpp"

namespace vld {

struct GradCheckEntry {
  std::string name;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  double analytic_norm = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error() const;
  std::string worst() const;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences with step h, tensor by tensor. loss_fn must rebuild the graph
/// from the current parameter values on each call. When max_per_tensor is
/// nonzero, a deterministic strided subset of entries is perturbed.
/// norm_floor keeps tensors whose true gradient is zero or near it (key
/// biases under softmax, biases under distance losses) from dividing
/// finite-difference noise by itself.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn, ParameterList params,
                                double h = 1e-5, std::size_t max_per_tensor = 0, double norm_floor = 1e-5);

}  // namespace vld
