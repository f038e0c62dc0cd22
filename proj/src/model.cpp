#include "vld/model.hpp"

#include <algorithm>
#include <map>

#include "vld/errors.hpp"
#include "vld/ops.hpp"

namespace vld {

namespace {

enum Stream : std::uint64_t {
  kEncoderStream = 1,
  kHubStream,
  kStaStream,
  kHeadClsStream,
  kHeadHubStream,
  kPromptStream,
};

VisionEncoder make_encoder(const EncoderConfig& config, std::uint64_t seed) {
  Rng rng(seed, kEncoderStream);
  return VisionEncoder(config, rng);
}

IdentityHead make_head(std::size_t dim, std::size_t identities, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  return IdentityHead::init(dim, identities, rng);
}

}  // namespace

void ModelConfig::validate() const {
  encoder.validate();
  if (frames == 0) throw ConfigError("model: frames must be positive");
  if (identities < 2) throw ConfigError("model: at least 2 training identities are needed");
  if (stp && insertion_layer >= encoder.depth) {
    throw ConfigError("stp.insertion_layer " + std::to_string(insertion_layer) + " must be below encoder depth " +
                      std::to_string(encoder.depth) + " (disable STP with stp.enabled = false)");
  }
  if (weights.v2t < 0 || weights.id_hub < 0 || weights.wrt_hub < 0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (retrieval == RetrievalFeature::kClsAndHub && !stp) {
    throw ConfigError("retrieval feature cls+hub needs STP enabled");
  }
}

LossWeights ModelConfig::effective_weights() const {
  LossWeights w = weights;
  if (!imlp) w.v2t = 0.0;
  if (!stp) w.id_hub = w.wrt_hub = 0.0;
  return w;
}

VldModel::VldModel(const ModelConfig& config, std::uint64_t seed)
    : encoder(make_encoder(config.encoder, seed)),
      head_cls(make_head(config.encoder.dim, config.identities, seed, kHeadClsStream)),
      config_(config) {
  config_.validate();
  const std::size_t D = config_.encoder.dim;
  if (config_.stp) {
    Rng hub_rng(seed, kHubStream);
    hub = HubState::init(config_.frames, D, config_.insertion_layer, hub_rng);
    Rng sta_rng(seed, kStaStream);
    sta = StaWeights::init(D, config_.encoder.heads, sta_rng);
    head_hub = make_head(D, config_.identities, seed, kHeadHubStream);
  }
  if (config_.imlp) {
    Rng prompt_rng(seed, kPromptStream);
    prompts = build_prompts(config_.identities, config_.prompt_slots, config_.prompt_template, D, prompt_rng);
    text.emplace(D, config_.text_heads, prompts->sequence_length(), kTextSeed, config_.text_layers);
    logit_scale = LogitScale::init(config_.initial_logit_scale);
  }
}

VldModel::Output VldModel::forward(const Tensor& pixels) const {
  Output out;
  if (!hub) {
    out.cls = encoder.encode_baseline(pixels, config_.frames);
    return out;
  }
  auto enc = encode_with_hub(encoder, pixels, config_.frames, *hub);
  out.cls = enc.feature;
  out.sta = sta_aggregate(enc.feature.frames, flatten_hub(enc.final_tokens), *sta);
  return out;
}

LossParts VldModel::losses(const Output& out, std::span<const std::size_t> labels) const {
  for (auto y : labels) {
    if (y >= config_.identities) {
      throw DataError("label " + std::to_string(y) + " outside the " + std::to_string(config_.identities) +
                      " training identities");
    }
  }
  const auto w = config_.effective_weights();
  LossParts parts;
  parts.id_cls = id_ce(out.cls.pooled, labels, head_cls);
  parts.wrt_cls = wrt_loss(out.cls.pooled, labels);
  if (prompts && w.v2t != 0.0) {
    parts.v2t = v2t_loss(out.cls.pooled, labels, encode_prompts(*prompts, *text), logit_scale->value());
  }
  if (out.sta && w.id_hub != 0.0) parts.id_hub = id_ce(out.sta->pooled, labels, *head_hub);
  if (out.sta && w.wrt_hub != 0.0) parts.wrt_hub = wrt_loss(out.sta->pooled, labels);
  return parts;
}

Tensor VldModel::loss(const Tensor& pixels, std::span<const std::size_t> labels, LossParts* parts) const {
  auto p = losses(forward(pixels), labels);
  Tensor total = total_loss(p, config_.effective_weights());
  if (parts) *parts = std::move(p);
  return total;
}

Tensor VldModel::retrieval_features(const Tensor& pixels) const {
  NoGradGuard no_grad;
  auto out = forward(pixels);
  if (config_.retrieval == RetrievalFeature::kCls) return out.cls.pooled;
  return ops::concat({ops::l2_normalize(out.cls.pooled), ops::l2_normalize(out.sta->pooled)}, 1);
}

ParameterList VldModel::parameters() const {
  ParameterList out;
  encoder.collect(out);
  if (hub) out.push_back({"stp/hub", hub->hub});
  if (sta) sta->collect("stp/sta", out);
  head_cls.collect("loss/head_cls", out);
  if (head_hub) head_hub->collect("loss/head_hub", out);
  if (prompts) {
    out.push_back({"imlp/prompts", prompts->slots, ParamGroup::kPrompt});
    out.push_back({"imlp/logit_scale", logit_scale->log_scale});
  }
  return out;
}

ParameterList VldModel::trainable_parameters() const {
  const auto w = config_.effective_weights();
  auto dead = [&](const std::string& name) {
    if (w.v2t == 0.0 && name.rfind("imlp/", 0) == 0) return true;
    if (w.id_hub == 0.0 && name.rfind("loss/head_hub", 0) == 0) return true;
    return w.id_hub == 0.0 && w.wrt_hub == 0.0 && name.rfind("stp/sta", 0) == 0;
  };
  ParameterList out;
  for (auto& p : parameters())
    if (!dead(p.name)) out.push_back(std::move(p));
  return out;
}

eval::GalleryIndex extract_features(const VldModel& model, const data::Dataset& dataset, std::size_t chunk) {
  if (dataset.tracklets.empty()) throw DataError("cannot extract features from an empty dataset");
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<double> rows;
  std::vector<std::size_t> labels;
  std::vector<data::Modality> modalities;
  std::vector<std::uint32_t> ids;
  std::size_t D = 0;
  for (std::size_t start = 0; start < dataset.tracklets.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + chunk, dataset.tracklets.size()); ++i) idx.push_back(i);
    auto batch = data::make_batch(dataset, idx, nullptr, nullptr);
    Tensor f = model.retrieval_features(batch.pixels);
    D = f.shape()[1];
    rows.insert(rows.end(), f.values().begin(), f.values().end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    modalities.insert(modalities.end(), batch.modalities.begin(), batch.modalities.end());
    ids.insert(ids.end(), batch.tracklet_ids.begin(), batch.tracklet_ids.end());
  }
  Tensor features = Tensor::from({labels.size(), D}, std::move(rows));
  return eval::make_index(features, std::move(labels),
                          std::move(modalities), std::move(ids));
}

}  // namespace vld
