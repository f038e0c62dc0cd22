#include "vld/imlp.hpp"

#include <cmath>

#include "vld/errors.hpp"
#include "vld/losses.hpp"
#include "vld/ops.hpp"

namespace vld {

namespace {
constexpr double kSlotInitStd = 0.02;
constexpr double kTemplateStd = 0.02;
constexpr double kLogitScaleMax = 100.0;
}  // namespace

PromptTemplate prompt_template(int template_id) {
  switch (template_id) {
    case 1: return {1, {}, {"person", "."}};
    case 2: return {2, {"a"}, {"person", "."}};
    case 3: return {3, {"a"}, {"person", "observed", "in", "rgb", "and", "infrared", "sequences", "."}};
    case 4: return {4, {"a"}, {"person", "observed", "in", "both", "day", "and", "night", "conditions", "."}};
    default: throw ConfigError("unknown prompt template id " + std::to_string(template_id));
  }
}

FrozenTextEncoder::FrozenTextEncoder(std::size_t dim, std::size_t heads, std::size_t max_tokens,
                                     std::uint64_t seed, std::size_t layers)
    : dim_(dim) {
  Rng rng(seed, /*stream=*/1);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  pos_embedding_ = gaussian_tensor({max_tokens, dim}, 0.01, rng, false);
  for (std::size_t i = 0; i < layers; ++i) {
    blocks_.push_back(TransformerBlock::init(dim, heads, 4, rng, false, stddev));
  }
  final_norm_ = LayerNorm::init(dim, false);
  projection_ = Linear::init(dim, dim, rng, stddev, false, /*with_bias=*/false);
}

Tensor FrozenTextEncoder::encode(const Tensor& tokens) const {
  if (tokens.dim() != 3 || tokens.shape()[2] != dim_ || tokens.shape()[1] > max_tokens()) {
    throw ShapeError("text encoder expects [N, L<=" + std::to_string(max_tokens()) + ", " +
                     std::to_string(dim_) + "], got " + shape_str(tokens.shape()));
  }
  const std::size_t n = tokens.shape()[0], L = tokens.shape()[1];
  Tensor x = ops::add(tokens, ops::slice(pos_embedding_, 0, 0, L));
  for (const auto& b : blocks_) x = b.forward(x);
  Tensor last = ops::reshape(ops::slice(x, 1, L - 1, 1), {n, dim_});
  return ops::l2_normalize(projection_(final_norm_(last)));
}

ParameterList FrozenTextEncoder::weights() const {
  ParameterList out;
  out.push_back({"text/pos", pos_embedding_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("text/block" + std::to_string(i), out);
  final_norm_.collect("text/ln_final", out);
  projection_.collect("text/proj", out);
  return out;
}

std::size_t PromptBank::sequence_length() const {
  return (prefix.defined() ? prefix.shape()[0] : 0) + slot_count() + (suffix.defined() ? suffix.shape()[0] : 0);
}

Tensor PromptBank::assemble() const {
  const std::size_t n = identities(), D = slots.shape()[2];
  std::vector<Tensor> parts;
  if (prefix.defined()) parts.push_back(ops::broadcast_to(ops::reshape(prefix, {1, prefix.shape()[0], D}), {n, prefix.shape()[0], D}));
  parts.push_back(slots);
  if (suffix.defined()) parts.push_back(ops::broadcast_to(ops::reshape(suffix, {1, suffix.shape()[0], D}), {n, suffix.shape()[0], D}));
  return parts.size() == 1 ? slots : ops::concat(parts, 1);
}

PromptBank build_prompts(std::size_t identities, std::size_t slots, int template_id, std::size_t dim, Rng& rng,
                         std::uint64_t template_seed) {
  if (identities < 2) throw ConfigError("prompt bank needs at least 2 identities");
  if (slots < 1) throw ConfigError("prompt bank needs at least 1 learnable slot");
  const auto tmpl = prompt_template(template_id);

  // Row k of the template embedding table sits at word position k.
  auto template_rows = [&](std::size_t first, std::size_t count) {
    std::vector<double> v(count * dim);
    for (std::size_t r = 0; r < count; ++r) {
      Rng pos_rng(template_seed ^ static_cast<std::uint64_t>(template_id), 1000 + first + r);
      for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] = pos_rng.normal(0.0, kTemplateStd);
    }
    return Tensor::from({count, dim}, std::move(v), false);
  };

  PromptBank bank;
  bank.template_id = template_id;
  bank.slots = gaussian_tensor({identities, slots, dim}, kSlotInitStd, rng, true);
  if (!tmpl.prefix.empty()) bank.prefix = template_rows(0, tmpl.prefix.size());
  bank.suffix = template_rows(tmpl.prefix.size() + slots, tmpl.suffix.size());
  return bank;
}

TextPrototypes encode_prompts(const PromptBank& bank, const FrozenTextEncoder& encoder) {
  if (bank.slots.shape()[2] != encoder.dim()) {
    throw ShapeError("prompt bank dim " + std::to_string(bank.slots.shape()[2]) + " != text encoder dim " +
                     std::to_string(encoder.dim()));
  }
  return {encoder.encode(bank.assemble())};
}

LogitScale LogitScale::init(double initial) { return {Tensor::scalar(std::log(initial), true)}; }

Tensor LogitScale::value() const { return ops::clamp_max(ops::exp(log_scale), kLogitScaleMax); }

Tensor cosine_logits(const Tensor& features, const TextPrototypes& prototypes, const Tensor& scale) {
  Tensor sims = ops::matmul(ops::l2_normalize(features), prototypes.features, /*transpose_b=*/true);
  return ops::mul(sims, scale);
}

Tensor v2t_loss(const Tensor& features, std::span<const std::size_t> labels, const TextPrototypes& prototypes,
                const Tensor& scale) {
  return cross_entropy(cosine_logits(features, prototypes, scale), labels);
}

}  // namespace vld
