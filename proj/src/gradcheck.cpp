#include "vld/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vld {

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.relative_error);
  return worst;
}

std::string GradCheckReport::worst() const {
  const GradCheckEntry* w = nullptr;
  for (const auto& e : entries)
    if (!w || e.relative_error > w->relative_error) w = &e;
  return w ? w->name : std::string();
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn, ParameterList params,
                                double h, std::size_t max_per_tensor, double norm_floor) {
  zero_grads(params);
  loss_fn().backward();

  GradCheckReport report;
  for (auto& p : params) {
    auto values = p.tensor.mutable_values();
    std::size_t n = values.size();
    std::size_t stride = (max_per_tensor == 0 || n <= max_per_tensor) ? 1 : n / max_per_tensor;
    std::vector<double> analytic(n, 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++checked;
    }
    double denom = std::max({std::sqrt(a2), std::sqrt(n2), norm_floor, 1e-300});
    report.entries.push_back({p.name, std::sqrt(diff2) / denom, std::sqrt(a2), checked});
  }
  zero_grads(params);
  return report;
}

}  // namespace vld
