#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vld/data.hpp"
#include "vld/eval.hpp"
#include "vld/imlp.hpp"
#include "vld/losses.hpp"
#include "vld/stp.hpp"
#include "vld/vit.hpp"

namespace vld {

enum class RetrievalFeature { kCls, kClsAndHub };

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t frames = 4;
  std::size_t identities = 20;  // classes seen in training

  bool stp = true;
  std::size_t insertion_layer = 2;

  bool imlp = true;
  std::size_t prompt_slots = 4;
  int prompt_template = 4;
  std::size_t text_heads = 4;
  std::size_t text_layers = 2;
  double initial_logit_scale = 1.0 / 0.07;

  LossWeights weights;
  RetrievalFeature retrieval = RetrievalFeature::kCls;

  void validate() const;
  /// λ of a disabled branch is zero whatever the configured value.
  LossWeights effective_weights() const;
};

/// Encoder plus the optional STP branch (hub, STA, hub identity head) and
/// IMLP branch (prompt bank, frozen text encoder, logit scale). Each component
/// draws its initial values from its own sub-stream of the seed, so toggling
/// a branch leaves every other component's initial values unchanged.
class VldModel {
 public:
  VldModel(const ModelConfig& config, std::uint64_t seed);

  struct Output {
    SequenceFeature cls;         // per-frame CLS features and f_cls^s
    std::optional<StaOutput> sta;  // f_H and f_H^s
  };

  const ModelConfig& config() const { return config_; }

  Output forward(const Tensor& pixels) const;
  /// labels are class indices in [0, identities).
  LossParts losses(const Output& out, std::span<const std::size_t> labels) const;
  Tensor loss(const Tensor& pixels, std::span<const std::size_t> labels, LossParts* parts = nullptr) const;

  /// Pooled retrieval feature per tracklet, computed without graph recording.
  Tensor retrieval_features(const Tensor& pixels) const;

  /// Every trainable tensor, prompt slots in the prompt group.
  ParameterList parameters() const;
  /// parameters() minus tensors that only feed loss terms weighted zero.
  ParameterList trainable_parameters() const;

  VisionEncoder encoder;
  IdentityHead head_cls;
  std::optional<HubState> hub;
  std::optional<StaWeights> sta;
  std::optional<IdentityHead> head_hub;
  std::optional<PromptBank> prompts;
  std::optional<FrozenTextEncoder> text;
  std::optional<LogitScale> logit_scale;

 private:
  ModelConfig config_;
};

/// Runs every tracklet of the dataset through the model in chunks of
/// `chunk` tracklets and returns the normalised retrieval index.
eval::GalleryIndex extract_features(const VldModel& model, const data::Dataset& dataset, std::size_t chunk = 16);

}  // namespace vld
