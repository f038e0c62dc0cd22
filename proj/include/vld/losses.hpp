#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vld/layers.hpp"
#include "vld/tensor.hpp"

namespace vld {

/// Linear identity classifier with bias: [D] -> [N_y] logits.
struct IdentityHead {
  Linear classifier;

  static IdentityHead init(std::size_t dim, std::size_t identities, Rng& rng);
  Tensor logits(const Tensor& features) const { return classifier(features); }
  void collect(const std::string& prefix, ParameterList& out) const { classifier.collect(prefix, out); }
};

struct LossWeights {
  double v2t = 0.08;
  double id_hub = 0.4;
  double wrt_hub = 1.0;
};

/// Mean softmax cross-entropy with one-hot targets.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

Tensor id_ce(const Tensor& features, std::span<const std::size_t> labels, const IdentityHead& head);

/// Positive (same label, not self) and negative (different label) masks over
/// the n×n distance matrix, row-major. Throws ContractError naming the first
/// anchor that lacks either.
struct PairMasks {
  std::vector<std::uint8_t> positive;
  std::vector<std::uint8_t> negative;
};

PairMasks build_pair_masks(std::span<const std::size_t> labels);

/// Weighted regularised triplet loss: per anchor, softmax(d) weights over
/// positive distances and softmax(-d) over negatives, then
/// softplus(sum w_p d_p - sum w_n d_n), averaged over anchors.
Tensor wrt_loss(const Tensor& features, std::span<const std::size_t> labels);

struct LossParts {
  std::optional<Tensor> id_cls;
  std::optional<Tensor> wrt_cls;
  std::optional<Tensor> v2t;
  std::optional<Tensor> id_hub;
  std::optional<Tensor> wrt_hub;
};

/// id_cls + wrt_cls + λ1·v2t + λ2·id_hub + λ3·wrt_hub. A part may be absent
/// only when its weight is zero. Non-finite parts raise DivergenceError.
Tensor total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace vld
