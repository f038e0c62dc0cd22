#pragma once

#include <cstddef>
#include <vector>

#include "vld/layers.hpp"
#include "vld/rng.hpp"
#include "vld/tensor.hpp"
#include "vld/vit.hpp"

namespace vld {

/// The learnable spatial-temporal hub, a single [T, T, D] parameter shared by
/// every tracklet of both modalities.
struct HubState {
  Tensor hub;
  /// 0-based index of the first encoder layer that sees the hub. A value
  /// equal to the encoder depth disables the hub.
  std::size_t insertion_layer = 0;

  static HubState init(std::size_t frames, std::size_t dim, std::size_t insertion_layer, Rng& rng);
  std::size_t frames() const { return hub.shape()[0]; }
  std::size_t dim() const { return hub.shape()[2]; }
};

/// Frame tokens with T hub rows appended to every frame: [B·T, N+1+T, D].
/// Frame t of a tracklet carries hub rows H[t, j] (or H[j, t] once
/// transposed) at positions N+1+j.
struct HubAugmentedTokens {
  Tensor tokens;
  std::size_t frame_tokens = 0;
  std::size_t frames = 0;
  bool transposed = false;

  Tensor frame_part() const;
  Tensor hub_part() const;  // [B·T, T, D]
};

HubAugmentedTokens attach_hub(const Tensor& frame_tokens, const HubState& hub);

/// Swaps the temporal and slot axes of the hub rows; frame tokens are copied
/// through untouched.
HubAugmentedTokens hub_transpose(const HubAugmentedTokens& vh);

enum class HubOrientation { kAbsent, kOriginal, kTransposed };

/// Hub orientation seen by each encoder layer: absent before the insertion
/// layer, then H, H^T, H, ... alternating.
std::vector<HubOrientation> hub_schedule(std::size_t depth, std::size_t insertion_layer);

struct HubEncoding {
  SequenceFeature feature;
  HubAugmentedTokens final_tokens;  // tokens undefined when the hub is off
};

/// Runs the encoder with the hub attached from the insertion layer onwards.
/// With insertion_layer == depth the computation is exactly encode_baseline.
HubEncoding encode_with_hub(const VisionEncoder& encoder, const Tensor& pixels,
                            std::size_t frames_per_tracklet, const HubState& hub);

/// Final-layer hub rows per tracklet, flattened in raster order over
/// (frame slot, hub row): [B, T², D].
Tensor flatten_hub(const HubAugmentedTokens& vh);

struct StaWeights {
  AttentionWeights attention;
  LayerNorm norm;

  static StaWeights init(std::size_t dim, std::size_t heads, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct StaOutput {
  Tensor frames;     // [B, T, D]
  Tensor pooled;     // [B, D]
  Tensor attention;  // [B·heads, T, T²]
};

/// Each frame's CLS feature queries the flattened hub (keys = values = Ĥ);
/// the result is layer-normalised and temporally pooled.
StaOutput sta_aggregate(const Tensor& cls_frames, const Tensor& flat_hub, const StaWeights& weights);

}  // namespace vld
