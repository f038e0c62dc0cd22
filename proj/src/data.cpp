#include "vld/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vld/checkpoint.hpp"
#include "vld/errors.hpp"

namespace vld::data {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPairStream = 0x100000;
constexpr std::uint64_t kOwnStream = 0x200000;
constexpr std::uint64_t kCameraStream = 0x300000;
constexpr std::uint64_t kTrackletStream = 0x400000;
constexpr char kManifestHeader[] = "tracklet_id\tidentity\tmodality\tcamera\tframes\tpath";

constexpr std::size_t kBands = 4;

struct Appearance {
  std::array<double, kBands> levels{};  // garment intensity per horizontal band
  std::array<double, 3> hue{};          // luminance-normalised colour
  double texture_amp = 0.0;
  double texture_kx = 1.0;
  double texture_ky = 1.0;
  double texture_phase = 0.0;
};

double luminance(const std::array<double, 3>& rgb) { return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]; }

Appearance draw_appearance(Rng& rng) {
  Appearance a;
  for (auto& l : a.levels) l = rng.uniform(0.15, 0.85);
  for (auto& c : a.hue) c = rng.uniform(0.7, 1.3);
  a.texture_amp = rng.uniform(0.1, 0.25);
  a.texture_kx = static_cast<double>(1 + rng.below(3));
  a.texture_ky = static_cast<double>(1 + rng.below(4));
  a.texture_phase = rng.uniform(0.0, 2.0 * M_PI);
  return a;
}

Appearance blend(const Appearance& shared, const Appearance& own, double share) {
  Appearance a = shared;
  for (std::size_t b = 0; b < kBands; ++b) a.levels[b] = share * shared.levels[b] + (1.0 - share) * own.levels[b];
  for (int c = 0; c < 3; ++c) a.hue[c] = share * shared.hue[c] + (1.0 - share) * own.hue[c];
  const double lum = luminance(a.hue);
  for (auto& c : a.hue) c /= lum;
  a.texture_amp = share * shared.texture_amp + (1.0 - share) * own.texture_amp;
  return a;
}

struct IdentityLatent {
  Appearance appearance;
  int velocity = 1;  // stripe rows per frame, signed
};

IdentityLatent identity_latent(const SyntheticSpec& spec, std::uint64_t seed, std::size_t identity) {
  const std::size_t pair = identity / 2;
  Rng pair_rng(seed, kPairStream + pair);
  Rng own_rng(seed, kOwnStream + identity);
  Appearance shared = draw_appearance(pair_rng);
  Appearance own = draw_appearance(own_rng);
  int speed = 1 + static_cast<int>(pair_rng.below(3));
  IdentityLatent latent;
  latent.appearance = blend(shared, own, spec.twin_share);
  latent.velocity = identity % 2 == 0 ? speed : -speed;
  return latent;
}

std::array<double, 9> camera_mixing(std::uint64_t seed, std::uint32_t camera) {
  Rng rng(seed, kCameraStream + camera);
  std::array<double, 9> m{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r * 3 + c] = (r == c ? 1.0 : 0.0) + rng.normal(0.0, 0.08);
  return m;
}

double camera_background(std::uint64_t seed, std::uint32_t camera) {
  Rng rng(seed, kCameraStream + 1000 + camera);
  return rng.uniform(0.2, 0.4);
}

std::uint8_t quantize(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

}  // namespace

std::string_view modality_name(Modality m) { return m == Modality::kVisible ? "visible" : "infrared"; }

Modality parse_modality(std::string_view name) {
  if (name == "visible") return Modality::kVisible;
  if (name == "infrared") return Modality::kInfrared;
  throw DataError("unknown modality '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  if (identities < 2) throw ConfigError("synthetic data needs at least 2 identities");
  if (train_identities < 2 || train_identities >= identities) {
    throw ConfigError("train identities must be at least 2 and leave at least one test identity");
  }
  if (tracklets_per_identity == 0 || frames == 0 || height < 4 || width < 4 || cameras_per_modality == 0) {
    throw ConfigError("synthetic data needs positive tracklet, frame, camera counts and images of at least 4x4");
  }
  if (twin_share < 0.0 || twin_share > 1.0) throw ConfigError("twin_share must lie in [0, 1]");
}

std::vector<std::size_t> Dataset::identities() const {
  std::set<std::size_t> ids;
  for (const auto& t : tracklets) ids.insert(t.identity);
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> Dataset::of(std::size_t identity, Modality modality) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tracklets.size(); ++i)
    if (tracklets[i].identity == identity && tracklets[i].modality == modality) out.push_back(i);
  return out;
}

std::size_t Dataset::frames() const {
  if (tracklets.empty()) throw DataError("dataset is empty");
  return tracklets.front().frames;
}

Tracklet render_tracklet(const SyntheticSpec& spec, std::uint64_t seed, std::size_t identity, Modality modality,
                         std::size_t index, std::uint32_t id) {
  const auto latent = identity_latent(spec, seed, identity);
  const auto& app = latent.appearance;
  const std::size_t H = spec.height, W = spec.width, T = spec.frames;
  const bool visible = modality == Modality::kVisible;
  const auto camera = static_cast<std::uint32_t>((visible ? 0 : spec.cameras_per_modality) +
                                                 index % spec.cameras_per_modality);
  Rng rng(seed, kTrackletStream + mix64((identity << 20) ^ (static_cast<std::uint64_t>(modality) << 16) ^ index));

  const double start = rng.uniform(0.0, static_cast<double>(H));
  const double brightness = rng.uniform(-0.05, 0.05);
  const int shift = static_cast<int>(rng.below(3)) - 1;
  const auto mixing = camera_mixing(seed, camera);
  const double background = camera_background(seed, camera);
  const double stripe_height = std::max(1.0, static_cast<double>(H) / 16.0);

  const double body_x0 = 0.2 * static_cast<double>(W), body_x1 = 0.8 * static_cast<double>(W);
  const double head_x0 = 0.35 * static_cast<double>(W), head_x1 = 0.65 * static_cast<double>(W);
  const double head_y1 = 0.2 * static_cast<double>(H), body_y0 = 0.05 * static_cast<double>(H);
  const double band_height = (static_cast<double>(H) - head_y1) / static_cast<double>(kBands);

  Tracklet t;
  t.id = id;
  t.identity = identity;
  t.modality = modality;
  t.camera = camera;
  t.frames = T;
  t.height = H;
  t.width = W;
  t.pixels.resize(T * H * W * 3);
  for (std::size_t f = 0; f < T; ++f) {
    const double stripe_y = std::fmod(start + latent.velocity * static_cast<double>(f) + 4.0 * H, static_cast<double>(H));
    for (std::size_t y = 0; y < H; ++y) {
      const double yc = static_cast<double>(y) + 0.5;
      double dy = std::fmod(yc - stripe_y + H, static_cast<double>(H));
      const bool on_stripe = dy < stripe_height;
      for (std::size_t x = 0; x < W; ++x) {
        const double xc = static_cast<double>(static_cast<int>(x) - shift) + 0.5;
        std::array<double, 3> rgb{background, background, background};
        if (yc < head_y1 && yc >= body_y0 && xc >= head_x0 && xc < head_x1) {
          rgb = {0.8, 0.65, 0.55};
        } else if (yc >= head_y1 && xc >= body_x0 && xc < body_x1) {
          auto band = std::min(kBands - 1, static_cast<std::size_t>((yc - head_y1) / band_height));
          double tex = app.texture_amp * std::cos(2.0 * M_PI * app.texture_kx * xc / W + app.texture_phase) *
                       std::cos(2.0 * M_PI * app.texture_ky * yc / H);
          for (int c = 0; c < 3; ++c) rgb[c] = app.levels[band] * app.hue[c] + tex;
        }
        if (on_stripe) {
          for (auto& v : rgb) v += spec.stripe_gain;
        }
        std::array<double, 3> out{};
        if (visible) {
          for (int r = 0; r < 3; ++r) {
            double v = 0.0;
            for (int c = 0; c < 3; ++c) v += mixing[r * 3 + c] * rgb[c];
            out[r] = v + brightness + rng.normal(0.0, spec.visible_noise);
          }
        } else {
          double v = 0.9 * luminance(rgb) + spec.infrared_bias + brightness + rng.normal(0.0, spec.infrared_noise);
          out = {v, v, v};
        }
        std::uint8_t* px = &t.pixels[((f * H + y) * W + x) * 3];
        for (int c = 0; c < 3; ++c) px[c] = quantize(out[c]);
      }
    }
  }
  return t;
}

std::pair<Dataset, Dataset> synthesize(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset train, test;
  std::uint32_t next_id = 0;
  for (std::size_t identity = 0; identity < spec.identities; ++identity) {
    Dataset& split = identity < spec.train_identities ? train : test;
    for (Modality m : {Modality::kVisible, Modality::kInfrared}) {
      for (std::size_t k = 0; k < spec.tracklets_per_identity; ++k) {
        Tracklet t = render_tracklet(spec, seed, identity, m, k, next_id++);
        char name[32];
        std::snprintf(name, sizeof(name), "tracklets/%06u.vldt", t.id);
        t.path = name;
        split.tracklets.push_back(std::move(t));
      }
    }
  }
  return {std::move(train), std::move(test)};
}

void write_split(const Dataset& dataset, const fs::path& split_root) {
  fs::create_directories(split_root / "tracklets");
  std::ofstream manifest(split_root / "manifest.tsv", std::ios::binary | std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest under '" + split_root.string() + "'");
  manifest << kManifestHeader << '\n';
  for (const auto& t : dataset.tracklets) {
    manifest << t.id << '\t' << t.identity << '\t' << modality_name(t.modality) << '\t' << t.camera << '\t'
             << t.frames << '\t' << t.path << '\n';
    io::write_container(split_root / t.path,
                        {io::Record::from_bytes("frames", {t.frames, t.height, t.width, 3}, t.pixels)});
  }
}

void generate(const SyntheticSpec& spec, std::uint64_t seed, const fs::path& root) {
  auto [train, test] = synthesize(spec, seed);
  write_split(train, root / "train");
  write_split(test, root / "test");
}

Dataset load_split(const fs::path& split_root) {
  std::ifstream manifest(split_root / "manifest.tsv");
  if (!manifest) throw DataError("no manifest.tsv under '" + split_root.string() + "'");
  std::string line;
  std::getline(manifest, line);
  if (line != kManifestHeader) throw DataError((split_root / "manifest.tsv").string() + ":1: unexpected header");
  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, identity, modality, camera, frames, path;
    if (!std::getline(row, id, '\t') || !std::getline(row, identity, '\t') || !std::getline(row, modality, '\t') ||
        !std::getline(row, camera, '\t') || !std::getline(row, frames, '\t') || !std::getline(row, path)) {
      throw DataError((split_root / "manifest.tsv").string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    }
    Tracklet t;
    try {
      t.id = static_cast<std::uint32_t>(std::stoul(id));
      t.identity = std::stoul(identity);
      t.camera = static_cast<std::uint32_t>(std::stoul(camera));
      t.frames = std::stoul(frames);
    } catch (const std::exception&) {
      throw DataError((split_root / "manifest.tsv").string() + ":" + std::to_string(line_no) + ": malformed number");
    }
    t.modality = parse_modality(modality);
    t.path = path;
    auto records = io::read_container(split_root / path);
    if (records.size() != 1 || records[0].dtype != io::DType::kUInt8 || records[0].shape.size() != 4 ||
        records[0].shape[0] != t.frames || records[0].shape[3] != 3) {
      throw DataError("tracklet file '" + path + "' does not hold [" + frames + ", H, W, 3] u8 frames");
    }
    t.height = records[0].shape[1];
    t.width = records[0].shape[2];
    t.pixels = std::move(records[0].payload);
    ds.tracklets.push_back(std::move(t));
  }
  return ds;
}

Frame frame_of(const Tracklet& t, std::size_t index) {
  if (index >= t.frames) {
    throw DataError("frame " + std::to_string(index) + " of tracklet " + std::to_string(t.id) + " with " +
                    std::to_string(t.frames) + " frames");
  }
  Frame f{t.height, t.width, std::vector<double>(t.height * t.width * 3)};
  const std::uint8_t* src = &t.pixels[index * t.height * t.width * 3];
  for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = src[i] / 255.0;
  return f;
}

AugmentPlan draw_augment(const AugmentConfig& config, Modality modality, Rng& rng) {
  AugmentPlan plan;
  plan.crop_y = config.pad;
  plan.crop_x = config.pad;
  if (!config.enabled) return plan;
  plan.flip = rng.bernoulli(config.flip_prob);
  plan.crop_y = static_cast<std::size_t>(rng.below(2 * config.pad + 1));
  plan.crop_x = static_cast<std::size_t>(rng.below(2 * config.pad + 1));
  if (modality == Modality::kVisible) {
    if (rng.bernoulli(config.erase_prob)) plan.erase_channel = static_cast<int>(rng.below(3));
    if (rng.bernoulli(config.swap_prob)) {
      std::vector<int> order{0, 1, 2};
      rng.shuffle(order);
      plan.channel_order = {order[0], order[1], order[2]};
    }
  }
  return plan;
}

Frame apply_augment(const Frame& frame, const AugmentPlan& plan, std::size_t pad) {
  const std::size_t H = frame.height, W = frame.width;
  Frame out{H, W, std::vector<double>(frame.pixels.size(), 0.0)};
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      // Position in the padded canvas, then back into the source frame.
      long sy = static_cast<long>(y + plan.crop_y) - static_cast<long>(pad);
      long sx = static_cast<long>(x + plan.crop_x) - static_cast<long>(pad);
      if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
      std::size_t src_x = plan.flip ? W - 1 - static_cast<std::size_t>(sx) : static_cast<std::size_t>(sx);
      const double* src = &frame.pixels[(static_cast<std::size_t>(sy) * W + src_x) * 3];
      double* dst = &out.pixels[(y * W + x) * 3];
      for (int c = 0; c < 3; ++c) {
        int from = plan.channel_order[c];
        dst[c] = from == plan.erase_channel ? 0.0 : src[from];
      }
    }
  }
  return out;
}

Frame augment(const Frame& frame, Modality modality, const AugmentConfig& config, Rng& rng) {
  return apply_augment(frame, draw_augment(config, modality, rng), config.pad);
}

SequenceBatch make_batch(const Dataset& dataset, std::span<const std::size_t> indices, const AugmentConfig* augment,
                         Rng* rng) {
  if (indices.empty()) throw DataError("empty batch");
  const auto& first = dataset.tracklets.at(indices[0]);
  const std::size_t T = first.frames, H = first.height, W = first.width;
  std::vector<double> pixels;
  pixels.reserve(indices.size() * T * H * W * 3);
  SequenceBatch batch;
  batch.frames = T;
  for (auto idx : indices) {
    const auto& t = dataset.tracklets.at(idx);
    if (t.frames != T || t.height != H || t.width != W) {
      throw DataError("tracklet " + std::to_string(t.id) + " has a different frame count or size");
    }
    AugmentPlan plan;
    bool apply = augment && rng && augment->enabled;
    if (apply) plan = draw_augment(*augment, t.modality, *rng);
    for (std::size_t f = 0; f < T; ++f) {
      Frame frame = frame_of(t, f);
      if (apply) frame = apply_augment(frame, plan, augment->pad);
      pixels.insert(pixels.end(), frame.pixels.begin(), frame.pixels.end());
    }
    batch.labels.push_back(t.identity);
    batch.modalities.push_back(t.modality);
    batch.cameras.push_back(t.camera);
    batch.tracklet_ids.push_back(t.id);
  }
  batch.pixels = Tensor::from({indices.size() * T, H, W, 3}, std::move(pixels));
  return batch;
}

std::vector<std::size_t> cross_modal_identities(const Dataset& dataset) {
  std::map<std::size_t, int> seen;
  for (const auto& t : dataset.tracklets) seen[t.identity] |= t.modality == Modality::kVisible ? 1 : 2;
  std::vector<std::size_t> out;
  for (auto [id, mask] : seen)
    if (mask == 3) out.push_back(id);
  return out;
}

SequenceBatch sample_batch(const BatchPlan& plan, const Dataset& dataset, std::span<const std::size_t> identities,
                           const AugmentConfig& augment, Rng& rng) {
  if (plan.identities < 2 || plan.tracklets < 1) {
    throw ConfigError("batch plan needs at least 2 identities and 1 tracklet per identity");
  }
  if (identities.size() != plan.identities) {
    throw DataError("batch plan wants " + std::to_string(plan.identities) + " identities, got " +
                    std::to_string(identities.size()));
  }
  std::vector<std::size_t> chosen;
  for (Modality m : {Modality::kVisible, Modality::kInfrared}) {
    for (auto id : identities) {
      auto pool = dataset.of(id, m);
      if (pool.empty()) {
        throw DataError("identity " + std::to_string(id) + " has no " + std::string(modality_name(m)) + " tracklets");
      }
      if (pool.size() >= plan.tracklets) {
        rng.shuffle(pool);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(plan.tracklets));
      } else {
        for (std::size_t k = 0; k < plan.tracklets; ++k) chosen.push_back(pool[rng.below(pool.size())]);
      }
    }
  }
  return make_batch(dataset, chosen, &augment, &rng);
}

SequenceBatch sample_batch(const BatchPlan& plan, const Dataset& dataset, const AugmentConfig& augment, Rng& rng) {
  auto eligible = cross_modal_identities(dataset);
  if (eligible.size() < plan.identities) {
    throw DataError("dataset has " + std::to_string(eligible.size()) + " cross-modal identities, batch needs " +
                    std::to_string(plan.identities));
  }
  rng.shuffle(eligible);
  eligible.resize(plan.identities);
  return sample_batch(plan, dataset, eligible, augment, rng);
}

std::vector<std::vector<std::size_t>> epoch_groups(const BatchPlan& plan, const Dataset& dataset, Rng& rng) {
  auto eligible = cross_modal_identities(dataset);
  if (eligible.size() < plan.identities) {
    throw DataError("dataset has " + std::to_string(eligible.size()) + " cross-modal identities, batch needs " +
                    std::to_string(plan.identities));
  }
  std::size_t fewest = SIZE_MAX;
  for (auto id : eligible)
    for (Modality m : {Modality::kVisible, Modality::kInfrared}) fewest = std::min(fewest, dataset.of(id, m).size());
  const std::size_t passes = std::max<std::size_t>(1, fewest / plan.tracklets);
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    rng.shuffle(eligible);
    for (std::size_t i = 0; i + plan.identities <= eligible.size(); i += plan.identities) {
      groups.emplace_back(eligible.begin() + static_cast<std::ptrdiff_t>(i),
                          eligible.begin() + static_cast<std::ptrdiff_t>(i + plan.identities));
    }
  }
  return groups;
}

}  // namespace vld::data
