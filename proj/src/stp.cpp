#include "vld/stp.hpp"

#include "vld/errors.hpp"
#include "vld/ops.hpp"

namespace vld {

namespace {
constexpr double kHubInitStd = 0.02;
constexpr double kStaInitStd = 0.02;
}  // namespace

HubState HubState::init(std::size_t frames, std::size_t dim, std::size_t insertion_layer, Rng& rng) {
  if (frames == 0 || dim == 0) throw ConfigError("hub: frames and dim must be positive");
  return {gaussian_tensor({frames, frames, dim}, kHubInitStd, rng, true), insertion_layer};
}

Tensor HubAugmentedTokens::frame_part() const { return ops::slice(tokens, 1, 0, frame_tokens); }

Tensor HubAugmentedTokens::hub_part() const { return ops::slice(tokens, 1, frame_tokens, frames); }

HubAugmentedTokens attach_hub(const Tensor& frame_tokens, const HubState& hub) {
  const std::size_t T = hub.frames(), D = hub.dim();
  if (frame_tokens.dim() != 3 || frame_tokens.shape()[2] != D) {
    throw ShapeError("attach_hub: frame tokens " + shape_str(frame_tokens.shape()) +
                     " do not match hub " + shape_str(hub.hub.shape()));
  }
  const std::size_t F = frame_tokens.shape()[0];
  if (F % T != 0) {
    throw ConfigError("attach_hub: hub is sized for " + std::to_string(T) + " frames but " +
                      std::to_string(F) + " frames do not form whole tracklets");
  }
  const std::size_t B = F / T;
  Tensor rows = ops::reshape(ops::broadcast_to(ops::reshape(hub.hub, {1, T, T, D}), {B, T, T, D}), {F, T, D});
  return {ops::concat({frame_tokens, rows}, 1), frame_tokens.shape()[1], T, false};
}

HubAugmentedTokens hub_transpose(const HubAugmentedTokens& vh) {
  const std::size_t F = vh.tokens.shape()[0], D = vh.tokens.shape()[2], T = vh.frames;
  const std::size_t B = F / T;
  Tensor hub = ops::reshape(vh.hub_part(), {B, T, T, D});
  Tensor swapped = ops::reshape(ops::permute(hub, {0, 2, 1, 3}), {F, T, D});
  return {ops::concat({vh.frame_part(), swapped}, 1), vh.frame_tokens, T, !vh.transposed};
}

std::vector<HubOrientation> hub_schedule(std::size_t depth, std::size_t insertion_layer) {
  std::vector<HubOrientation> out(depth, HubOrientation::kAbsent);
  for (std::size_t i = insertion_layer; i < depth; ++i) {
    out[i] = (i - insertion_layer) % 2 == 0 ? HubOrientation::kOriginal : HubOrientation::kTransposed;
  }
  return out;
}

HubEncoding encode_with_hub(const VisionEncoder& encoder, const Tensor& pixels,
                            std::size_t frames_per_tracklet, const HubState& hub) {
  const std::size_t depth = encoder.config().depth;
  if (hub.insertion_layer > depth) {
    throw ConfigError("hub insertion layer " + std::to_string(hub.insertion_layer) +
                      " is outside the " + std::to_string(depth) + "-layer encoder");
  }
  if (hub.insertion_layer == depth) {
    return {encoder.encode_baseline(pixels, frames_per_tracklet), {}};
  }
  if (frames_per_tracklet != hub.frames()) {
    throw ConfigError("hub is sized for " + std::to_string(hub.frames()) + " frames, tracklets have " +
                      std::to_string(frames_per_tracklet));
  }
  Tensor x = encoder.embed(pixels);
  for (std::size_t i = 0; i < hub.insertion_layer; ++i) x = encoder.run_layer(i, x);
  HubAugmentedTokens vh = attach_hub(x, hub);
  for (std::size_t i = hub.insertion_layer; i < depth; ++i) {
    if (i > hub.insertion_layer) vh = hub_transpose(vh);
    vh.tokens = encoder.run_layer(i, vh.tokens);
  }
  return {pool_frames(encoder.cls_features(vh.tokens), frames_per_tracklet), vh};
}

Tensor flatten_hub(const HubAugmentedTokens& vh) {
  const std::size_t F = vh.tokens.shape()[0], D = vh.tokens.shape()[2], T = vh.frames;
  return ops::reshape(vh.hub_part(), {F / T, T * T, D});
}

StaWeights StaWeights::init(std::size_t dim, std::size_t heads, Rng& rng) {
  return {AttentionWeights::init(dim, heads, rng, kStaInitStd, true), LayerNorm::init(dim, true)};
}

void StaWeights::collect(const std::string& prefix, ParameterList& out) const {
  attention.collect(prefix + "/attn", out);
  norm.collect(prefix + "/ln", out);
}

StaOutput sta_aggregate(const Tensor& cls_frames, const Tensor& flat_hub, const StaWeights& weights) {
  if (cls_frames.dim() != 3 || flat_hub.dim() != 3 || cls_frames.shape()[0] != flat_hub.shape()[0]) {
    throw ShapeError("sta_aggregate: CLS " + shape_str(cls_frames.shape()) + " and hub " +
                     shape_str(flat_hub.shape()) + " disagree");
  }
  auto attn = multi_head_attention(cls_frames, flat_hub, flat_hub, weights.attention);
  Tensor frames = weights.norm(attn.output);
  return {frames, temporal_average_pool(frames), attn.weights};
}

}  // namespace vld
