#include "vld/vit.hpp"

#include <cmath>

#include "vld/errors.hpp"
#include "vld/ops.hpp"

namespace vld {

namespace {
constexpr double kInitStd = 0.02;
}

std::size_t EncoderConfig::num_patches() const {
  return (image_height / patch_size) * (image_width / patch_size);
}

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ConfigError("encoder: image " + std::to_string(image_height) + "x" +
                      std::to_string(image_width) + " is not divisible into " +
                      std::to_string(patch_size) + "-pixel patches");
  }
  if (channels == 0 || depth == 0 || dim == 0 || mlp_ratio == 0) {
    throw ConfigError("encoder: channels, depth, dim and mlp_ratio must be positive");
  }
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("encoder: dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

std::size_t count_layer_tokens(const EncoderConfig& config, bool hub_active, std::size_t frames) {
  return config.frame_tokens() + (hub_active ? frames : 0);
}

TransformerBlock TransformerBlock::init(std::size_t dim, std::size_t heads, std::size_t mlp_ratio,
                                        Rng& rng, bool trainable, double init_std) {
  auto std_for = [&](std::size_t fan_in) {
    return init_std > 0 ? init_std : 1.0 / std::sqrt(static_cast<double>(fan_in));
  };
  TransformerBlock b;
  b.norm1 = LayerNorm::init(dim, trainable);
  b.attention = AttentionWeights::init(dim, heads, rng, std_for(dim), trainable);
  b.norm2 = LayerNorm::init(dim, trainable);
  b.fc1 = Linear::init(dim, mlp_ratio * dim, rng, std_for(dim), trainable);
  b.fc2 = Linear::init(mlp_ratio * dim, dim, rng, std_for(mlp_ratio * dim), trainable);
  return b;
}

Tensor TransformerBlock::forward(const Tensor& x) const {
  Tensor h = norm1(x);
  Tensor y = ops::add(x, multi_head_attention(h, h, h, attention).output);
  return ops::add(y, fc2(ops::gelu(fc1(norm2(y)))));
}

void TransformerBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm1.collect(prefix + "/ln1", out);
  attention.collect(prefix + "/attn", out);
  norm2.collect(prefix + "/ln2", out);
  fc1.collect(prefix + "/fc1", out);
  fc2.collect(prefix + "/fc2", out);
}

Tensor temporal_average_pool(const Tensor& frames) {
  if (frames.dim() != 3 || frames.shape()[1] == 0) {
    throw ShapeError("temporal pooling expects [B, T>=1, D], got " + shape_str(frames.shape()));
  }
  return ops::mean(frames, 1);
}

SequenceFeature pool_frames(const Tensor& cls, std::size_t frames_per_tracklet) {
  if (frames_per_tracklet == 0) throw DataError("tracklet has no frames");
  std::size_t F = cls.shape()[0], D = cls.shape()[1];
  if (F % frames_per_tracklet != 0) {
    throw ShapeError(std::to_string(F) + " frames do not split into tracklets of " +
                     std::to_string(frames_per_tracklet));
  }
  Tensor frames = ops::reshape(cls, {F / frames_per_tracklet, frames_per_tracklet, D});
  return {frames, temporal_average_pool(frames)};
}

VisionEncoder::VisionEncoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t D = config_.dim;
  patch_projection = Linear::init(config_.patch_dim(), D, rng, 1.0 / std::sqrt(static_cast<double>(config_.patch_dim())), true);
  cls_token = gaussian_tensor({D}, kInitStd, rng, true);
  pos_embedding = gaussian_tensor({config_.frame_tokens(), D}, kInitStd, rng, true);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    blocks.push_back(TransformerBlock::init(D, config_.heads, config_.mlp_ratio, rng, true, 0.0));
  }
  final_norm = LayerNorm::init(D, true);
}

Tensor VisionEncoder::embed(const Tensor& pixels) const {
  const auto& c = config_;
  if (pixels.dim() != 4 || pixels.shape()[1] != c.image_height || pixels.shape()[2] != c.image_width ||
      pixels.shape()[3] != c.channels) {
    throw ConfigError("encoder expects frames [F, " + std::to_string(c.image_height) + ", " +
                      std::to_string(c.image_width) + ", " + std::to_string(c.channels) + "], got " +
                      shape_str(pixels.shape()));
  }
  const std::size_t F = pixels.shape()[0], P = c.patch_size;
  const std::size_t gh = c.image_height / P, gw = c.image_width / P;
  Tensor blocks6 = ops::reshape(pixels, {F, gh, P, gw, P, c.channels});
  Tensor patches = ops::reshape(ops::permute(blocks6, {0, 1, 3, 2, 4, 5}), {F, gh * gw, c.patch_dim()});
  Tensor projected = patch_projection(patches);
  Tensor cls = ops::broadcast_to(ops::reshape(cls_token, {1, 1, c.dim}), {F, 1, c.dim});
  return ops::add(ops::concat({cls, projected}, 1), pos_embedding);
}

Tensor VisionEncoder::run_layer(std::size_t layer, const Tensor& tokens) const {
  return blocks.at(layer).forward(tokens);
}

Tensor VisionEncoder::cls_features(const Tensor& tokens) const {
  const std::size_t F = tokens.shape()[0];
  return final_norm(ops::reshape(ops::slice(tokens, 1, 0, 1), {F, config_.dim}));
}

SequenceFeature VisionEncoder::encode_baseline(const Tensor& pixels, std::size_t frames_per_tracklet) const {
  if (frames_per_tracklet == 0 || pixels.dim() == 0 || pixels.shape()[0] == 0) {
    throw DataError("encode_baseline: tracklet has no frames");
  }
  Tensor x = embed(pixels);
  for (std::size_t i = 0; i < blocks.size(); ++i) x = run_layer(i, x);
  return pool_frames(cls_features(x), frames_per_tracklet);
}

void VisionEncoder::collect(ParameterList& out) const {
  patch_projection.collect("vit/patch_proj", out);
  out.push_back({"vit/cls", cls_token});
  out.push_back({"vit/pos", pos_embedding});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("vit/block" + std::to_string(i), out);
  final_norm.collect("vit/ln_final", out);
}

}  // namespace vld
