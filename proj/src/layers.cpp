#include "vld/layers.hpp"

#include <cmath>

#include "vld/errors.hpp"
#include "vld/ops.hpp"

namespace vld {

Tensor gaussian_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, double stddev, bool trainable,
                    bool with_bias) {
  Linear l;
  l.weight = gaussian_tensor({in, out}, stddev, rng, trainable);
  if (with_bias) l.bias = Tensor::zeros({out}, trainable);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParameterList& out, ParamGroup group) const {
  out.push_back({prefix + "/weight", weight, group});
  if (bias.defined()) out.push_back({prefix + "/bias", bias, group});
}

LayerNorm LayerNorm::init(std::size_t dim, bool trainable) {
  return {Tensor::full({dim}, 1.0, trainable), Tensor::zeros({dim}, trainable)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias); }

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "/gain", gain});
  out.push_back({prefix + "/bias", bias});
}

AttentionWeights AttentionWeights::init(std::size_t dim, std::size_t heads, Rng& rng, double stddev,
                                        bool trainable) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  AttentionWeights w;
  w.query = Linear::init(dim, dim, rng, stddev, trainable);
  w.key = Linear::init(dim, dim, rng, stddev, trainable);
  w.value = Linear::init(dim, dim, rng, stddev, trainable);
  w.output = Linear::init(dim, dim, rng, stddev, trainable);
  w.heads = heads;
  return w;
}

void AttentionWeights::collect(const std::string& prefix, ParameterList& out) const {
  query.collect(prefix + "/q", out);
  key.collect(prefix + "/k", out);
  value.collect(prefix + "/v", out);
  output.collect(prefix + "/out", out);
}

AttentionResult multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                                     const AttentionWeights& weights) {
  const std::size_t D = weights.dim();
  const std::size_t h = weights.heads;
  if (h == 0 || D % h != 0) {
    throw ConfigError("attention: dim " + std::to_string(D) + " is not divisible by " +
                      std::to_string(h) + " heads");
  }
  const bool unbatched = query.dim() == 2;
  auto as_batched = [&](const Tensor& t) {
    return unbatched ? ops::reshape(t, {1, t.shape()[0], t.shape()[1]}) : t;
  };
  Tensor q = as_batched(query), k = as_batched(key), v = as_batched(value);
  if (q.dim() != 3 || k.dim() != 3 || v.dim() != 3 || q.shape()[2] != D || k.shape()[2] != D ||
      v.shape() != k.shape() || q.shape()[0] != k.shape()[0]) {
    throw ShapeError("attention: incompatible query " + shape_str(query.shape()) + ", key " +
                     shape_str(key.shape()) + ", value " + shape_str(value.shape()));
  }
  const std::size_t B = q.shape()[0], Lq = q.shape()[1], Lk = k.shape()[1], dh = D / h;

  auto split_heads = [&](const Tensor& t, std::size_t L) {
    return ops::reshape(ops::permute(ops::reshape(t, {B, L, h, dh}), {0, 2, 1, 3}), {B * h, L, dh});
  };
  Tensor Q = split_heads(weights.query(q), Lq);
  Tensor K = split_heads(weights.key(k), Lk);
  Tensor V = split_heads(weights.value(v), Lk);

  Tensor scores = ops::scale(ops::matmul(Q, K, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor probs = ops::softmax(scores, 2);
  Tensor ctx = ops::matmul(probs, V);
  ctx = ops::reshape(ops::permute(ops::reshape(ctx, {B, h, Lq, dh}), {0, 2, 1, 3}), {B, Lq, D});
  Tensor out = weights.output(ctx);
  if (unbatched) out = ops::reshape(out, {Lq, D});
  return {out, probs};
}

}  // namespace vld
