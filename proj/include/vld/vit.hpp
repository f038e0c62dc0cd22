#pragma once

#include <cstddef>
#include <vector>

#include "vld/layers.hpp"
#include "vld/optim.hpp"
#include "vld/rng.hpp"
#include "vld/tensor.hpp"

namespace vld {

struct EncoderConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 16;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t depth = 4;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  std::size_t num_patches() const;
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t frame_tokens() const { return num_patches() + 1; }
  void validate() const;
};

/// Tokens per frame seen by one encoder layer: N+1, plus T hub rows when the
/// hub is attached.
std::size_t count_layer_tokens(const EncoderConfig& config, bool hub_active, std::size_t frames);

/// Pre-norm block: x + MHA(LN(x)), then x + MLP(LN(x)) with a GELU MLP.
struct TransformerBlock {
  LayerNorm norm1;
  AttentionWeights attention;
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;

  /// Linear weights are Gaussian with init_std, or 1/sqrt(fan_in) when
  /// init_std is 0; biases start at zero and norms at identity.
  static TransformerBlock init(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng,
                               bool trainable, double init_std = 0.0);
  /// x: [B, L, D]. Attention runs independently within each of the B rows.
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Per-frame CLS features and their temporal mean.
struct SequenceFeature {
  Tensor frames;  // [B, T, D]
  Tensor pooled;  // [B, D]
};

/// Mean over the frame axis of [B, T, D].
Tensor temporal_average_pool(const Tensor& frames);

class VisionEncoder {
 public:
  VisionEncoder(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// pixels [F, H, W, C] -> tokens [F, N+1, D]: CLS first, then patches in
  /// raster order, each a flattened P×P×C block projected by C, plus the
  /// learned positional embedding.
  Tensor embed(const Tensor& pixels) const;
  Tensor run_layer(std::size_t layer, const Tensor& tokens) const;
  /// Final layer norm applied to token 0 of every frame: [F, L, D] -> [F, D].
  Tensor cls_features(const Tensor& tokens) const;

  /// Frames are encoded independently and pooled per tracklet. pixels holds
  /// B·T frames, tracklet-major.
  SequenceFeature encode_baseline(const Tensor& pixels, std::size_t frames_per_tracklet) const;

  void collect(ParameterList& out) const;

  Linear patch_projection;
  Tensor cls_token;      // [D]
  Tensor pos_embedding;  // [N+1, D]
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;

 private:
  EncoderConfig config_;
};

/// Splits [B·T, ...] CLS rows into [B, T, D] and pools them.
SequenceFeature pool_frames(const Tensor& cls, std::size_t frames_per_tracklet);

}  // namespace vld
