#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vld/rng.hpp"
#include "vld/tensor.hpp"

namespace vld::data {

enum class Modality : std::uint8_t { kVisible = 0, kInfrared = 1 };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// Two-modality tracklet generator. Each identity has a clothing pattern
/// (an intensity per horizontal band, a hue and a low-frequency texture;
/// infrared sees the intensity, visible sees intensity times hue through a
/// per-camera colour mixing) and a horizontal stripe
/// that moves vertically by a fixed number of rows per frame. Identities come
/// in pairs that share most of their appearance and differ in the stripe's
/// direction, which frame averaging cannot see.
struct SyntheticSpec {
  std::size_t identities = 30;
  std::size_t train_identities = 20;
  std::size_t tracklets_per_identity = 4;  // per modality
  std::size_t frames = 4;
  std::size_t height = 32;
  std::size_t width = 16;
  std::size_t cameras_per_modality = 2;
  double visible_noise = 0.04;
  double infrared_noise = 0.06;
  double infrared_bias = 0.12;
  double twin_share = 0.8;  // fraction of appearance shared within an identity pair
  double stripe_gain = 0.35;

  void validate() const;
};

struct Tracklet {
  std::uint32_t id = 0;
  std::size_t identity = 0;
  Modality modality = Modality::kVisible;
  std::uint32_t camera = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // [frames, height, width, 3]
  std::string path;                  // relative to the split root
};

struct Dataset {
  std::vector<Tracklet> tracklets;

  std::vector<std::size_t> identities() const;
  std::vector<std::size_t> of(std::size_t identity, Modality modality) const;
  std::size_t frames() const;
};

/// Renders one tracklet. Deterministic in (spec, seed, identity, index).
Tracklet render_tracklet(const SyntheticSpec& spec, std::uint64_t seed, std::size_t identity, Modality modality,
                         std::size_t index, std::uint32_t id);

/// Builds both splits in memory: identities [0, train) train, the rest test.
std::pair<Dataset, Dataset> synthesize(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes root/train and root/test, each holding manifest.tsv and one
/// container file per tracklet. Same (spec, seed) gives identical bytes.
void generate(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& root);

void write_split(const Dataset& dataset, const std::filesystem::path& split_root);
Dataset load_split(const std::filesystem::path& split_root);

/// HWC frame with values in [0, 1].
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
};

struct AugmentConfig {
  bool enabled = true;
  double flip_prob = 0.5;
  std::size_t pad = 10;
  double erase_prob = 0.5;  // visible only
  double swap_prob = 0.5;   // visible only
};

/// Random choices for one tracklet; every frame of the tracklet gets the
/// same plan so motion stays coherent.
struct AugmentPlan {
  bool flip = false;
  std::size_t crop_y = 0;  // offset into the padded frame
  std::size_t crop_x = 0;
  int erase_channel = -1;
  std::array<int, 3> channel_order{0, 1, 2};
};

AugmentPlan draw_augment(const AugmentConfig& config, Modality modality, Rng& rng);
/// Flip, zero-pad by `pad` and crop back at the plan's offset, erase one
/// channel, permute channels.
Frame apply_augment(const Frame& frame, const AugmentPlan& plan, std::size_t pad);
Frame augment(const Frame& frame, Modality modality, const AugmentConfig& config, Rng& rng);

Frame frame_of(const Tracklet& t, std::size_t index);

struct BatchPlan {
  std::size_t identities = 4;  // P
  std::size_t tracklets = 4;   // K, per identity per modality

  std::size_t size() const { return 2 * identities * tracklets; }
};

struct SequenceBatch {
  Tensor pixels;  // [B·T, H, W, 3]
  std::size_t frames = 0;
  std::vector<std::size_t> labels;
  std::vector<Modality> modalities;
  std::vector<std::uint32_t> cameras;
  std::vector<std::uint32_t> tracklet_ids;

  std::size_t size() const { return labels.size(); }
};

/// Stacks the given tracklets (optionally augmented) into one batch.
SequenceBatch make_batch(const Dataset& dataset, std::span<const std::size_t> indices, const AugmentConfig* augment,
                         Rng* rng);

/// For each chosen identity, K visible then K infrared tracklets (visible
/// block first). Tracklets are drawn without replacement when an identity has
/// at least K of them, with replacement otherwise.
SequenceBatch sample_batch(const BatchPlan& plan, const Dataset& dataset, std::span<const std::size_t> identities,
                           const AugmentConfig& augment, Rng& rng);
/// Same, with P identities drawn at random.
SequenceBatch sample_batch(const BatchPlan& plan, const Dataset& dataset, const AugmentConfig& augment, Rng& rng);

/// Identities that have tracklets in both modalities, in ascending order.
std::vector<std::size_t> cross_modal_identities(const Dataset& dataset);

/// Identity groups for one epoch, which visits every training tracklet about
/// once: floor(n / K) shuffled passes over the eligible identities, n being
/// the smallest per-identity per-modality tracklet count, each pass cut into
/// groups of P (the remainder is dropped).
std::vector<std::vector<std::size_t>> epoch_groups(const BatchPlan& plan, const Dataset& dataset, Rng& rng);

}  // namespace vld::data
