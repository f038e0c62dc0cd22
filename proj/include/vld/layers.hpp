#pragma once

#include <cstddef>
#include <string>

#include "vld/optim.hpp"
#include "vld/rng.hpp"
#include "vld/tensor.hpp"

namespace vld {

Tensor gaussian_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad);

/// y = x·W + b with W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;  // may be undefined

  static Linear init(std::size_t in, std::size_t out, Rng& rng, double stddev, bool trainable,
                     bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out, ParamGroup group = ParamGroup::kBase) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm init(std::size_t dim, bool trainable);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct AttentionWeights {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static AttentionWeights init(std::size_t dim, std::size_t heads, Rng& rng, double stddev, bool trainable);
  std::size_t dim() const { return query.weight.shape()[0]; }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct AttentionResult {
  Tensor output;   // same leading shape as the query
  Tensor weights;  // [batch * heads, Lq, Lk], rows sum to 1
};

/// Multi-head scaled dot-product attention with Q/K/V/output projections.
/// Inputs are [L, D] or batched [B, L, D]; scores are scaled by
/// 1/sqrt(D/heads) and every query row attends over all keys.
AttentionResult multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                                     const AttentionWeights& weights);

}  // namespace vld
