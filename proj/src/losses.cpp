#include "vld/losses.hpp"

#include <cmath>

#include "vld/errors.hpp"
#include "vld/ops.hpp"

namespace vld {

IdentityHead IdentityHead::init(std::size_t dim, std::size_t identities, Rng& rng) {
  return {Linear::init(dim, identities, rng, 0.001, true)};
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.dim() != 2 || logits.shape()[0] != labels.size() || labels.empty()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  for (auto l : labels) {
    if (l >= logits.shape()[1]) {
      throw DataError("label " + std::to_string(l) + " out of range for " + std::to_string(logits.shape()[1]) +
                      " classes");
    }
  }
  return ops::neg(ops::mean_all(ops::pick(ops::log_softmax(logits, 1), labels)));
}

Tensor id_ce(const Tensor& features, std::span<const std::size_t> labels, const IdentityHead& head) {
  return cross_entropy(head.logits(features), labels);
}

PairMasks build_pair_masks(std::span<const std::size_t> labels) {
  const std::size_t n = labels.size();
  PairMasks m{std::vector<std::uint8_t>(n * n, 0), std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool same = labels[i] == labels[j];
      m.positive[i * n + j] = same;
      m.negative[i * n + j] = !same;
      has_pos |= same;
      has_neg |= !same;
    }
    if (!has_pos || !has_neg) {
      throw ContractError("triplet anchor " + std::to_string(i) + " (label " + std::to_string(labels[i]) +
                          ") has no " + (has_pos ? "negative" : "positive") + " in the batch");
    }
  }
  return m;
}

Tensor wrt_loss(const Tensor& features, std::span<const std::size_t> labels) {
  if (features.dim() != 2 || features.shape()[0] != labels.size()) {
    throw ShapeError("wrt_loss: features " + shape_str(features.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  auto masks = build_pair_masks(labels);
  Tensor dist = ops::pairwise_euclidean(features);
  Tensor w_pos = ops::masked_softmax(dist, masks.positive);
  Tensor w_neg = ops::masked_softmax(ops::neg(dist), masks.negative);
  Tensor far_pos = ops::sum(ops::mul(w_pos, dist), 1);
  Tensor near_neg = ops::sum(ops::mul(w_neg, dist), 1);
  return ops::mean_all(ops::softplus(ops::sub(far_pos, near_neg)));
}

Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  struct Term {
    const char* name;
    const std::optional<Tensor>& part;
    double weight;
  };
  const Term terms[] = {{"id_cls", parts.id_cls, 1.0},
                        {"wrt_cls", parts.wrt_cls, 1.0},
                        {"v2t", parts.v2t, weights.v2t},
                        {"id_hub", parts.id_hub, weights.id_hub},
                        {"wrt_hub", parts.wrt_hub, weights.wrt_hub}};
  Tensor total;
  for (const auto& t : terms) {
    if (t.weight < 0.0) throw ConfigError(std::string("loss weight for ") + t.name + " is negative");
    if (!t.part) {
      if (t.weight != 0.0) throw ContractError(std::string("loss part ") + t.name + " is missing");
      continue;
    }
    if (!std::isfinite(t.part->item())) {
      throw DivergenceError(std::string("loss part ") + t.name + " is not finite");
    }
    Tensor term = t.weight == 1.0 ? *t.part : ops::scale(*t.part, t.weight);
    total = total.defined() ? ops::add(total, term) : term;
  }
  if (!total.defined()) throw ContractError("total_loss: no loss parts");
  return total;
}

}  // namespace vld
