#include "vld/profiler.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "vld/errors.hpp"

namespace vld::profile {

namespace {

constexpr char kConvention[] =
    "FLOPs count a multiply-accumulate as 2; MACs = FLOPs / 2. Matrix products only "
    "(softmax, layer norm, GELU and residual adds excluded). Per-frame basis; hub rows and "
    "STA cost are attributed per frame.";

constexpr double kReferenceBaselineG = 13.96;
constexpr double kReferenceStpG = 0.12;
constexpr double kReferenceStpParamsM = 2.39;

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

void validate(const ProfileConfig& c) {
  c.encoder.validate();
  if (c.frames == 0) throw ConfigError("profile: frames must be positive");
  if (c.stp && c.insertion_layer >= c.encoder.depth) {
    throw ConfigError("profile: insertion layer " + std::to_string(c.insertion_layer) + " outside encoder depth " +
                      std::to_string(c.encoder.depth));
  }
}

double sta_flops_per_frame(std::size_t T, std::size_t D) {
  const double t = static_cast<double>(T), d = static_cast<double>(D);
  double kv = 2.0 * 2.0 * t * t * d * d;
  double q = t * 2.0 * d * d;
  double out = t * 2.0 * d * d;
  double attention = 4.0 * t * t * t * d;
  return (kv + q + out + attention) / t;
}

}  // namespace

std::uint64_t CostReport::total_params() const {
  std::uint64_t n = 0;
  for (const auto& m : params) n += m.params;
  return n;
}

double CostReport::total_flops() const {
  double f = 0.0;
  for (const auto& m : flops) f += m.flops;
  return f;
}

std::uint64_t CostReport::params_of(const std::string& prefix) const {
  std::uint64_t n = 0;
  for (const auto& m : params)
    if (starts_with(m.name, prefix)) n += m.params;
  return n;
}

double CostReport::flops_of(const std::string& prefix) const {
  double f = 0.0;
  for (const auto& m : flops)
    if (starts_with(m.name, prefix)) f += m.flops;
  return f;
}

std::uint64_t block_params(std::size_t dim) {
  const std::uint64_t D = dim;
  return (4 * D * D + 4 * D) + (8 * D * D + 5 * D) + 4 * D;
}

double block_flops(std::size_t tokens, std::size_t dim) {
  const double L = static_cast<double>(tokens), D = static_cast<double>(dim);
  return 8.0 * L * D * D + 4.0 * L * L * D + 16.0 * L * D * D;
}

CostReport analyze(const ProfileConfig& config) {
  validate(config);
  const auto& e = config.encoder;
  const std::uint64_t D = e.dim, N = e.num_patches(), T = config.frames;
  CostReport r;
  r.params.push_back({"patch_embed", e.patch_dim() * D + D});
  r.params.push_back({"cls", D});
  r.params.push_back({"pos_embed", (N + 1) * D});
  for (std::size_t i = 0; i < e.depth; ++i) r.params.push_back({"block" + std::to_string(i), block_params(D)});
  r.params.push_back({"final_norm", 2 * D});
  if (config.stp) {
    r.params.push_back({"stp/hub", T * T * D});
    r.params.push_back({"stp/sta", 4 * D * D + 4 * D + 2 * D});
  }

  r.flops.push_back({"patch_embed", 2.0 * static_cast<double>(N * e.patch_dim() * D)});
  for (std::size_t i = 0; i < e.depth; ++i) {
    bool hub = config.stp && i >= config.insertion_layer;
    std::size_t L = count_layer_tokens(e, hub, T);
    r.layer_tokens.push_back(L);
    r.flops.push_back({"block" + std::to_string(i), block_flops(L, D)});
  }
  if (config.stp) r.flops.push_back({"stp/sta", sta_flops_per_frame(T, D)});
  return r;
}

StpDelta stp_delta(const ProfileConfig& config) {
  ProfileConfig off = config;
  off.stp = false;
  auto with = analyze(config);
  auto without = analyze(off);
  StpDelta d;
  d.params = static_cast<std::int64_t>(with.total_params()) - static_cast<std::int64_t>(without.total_params());
  d.flops = with.total_flops() - without.total_flops();
  d.sta = with.flops_of("stp/");
  d.encoder_growth = with.flops_of("block") - without.flops_of("block");
  return d;
}

std::string report_text(const ProfileConfig& config, const CostReport& report) {
  std::ostringstream out;
  char line[160];
  const auto& e = config.encoder;
  std::snprintf(line, sizeof(line), "config: %zux%zu P=%zu D=%zu depth=%zu heads=%zu T=%zu stp=%s",
                e.image_height, e.image_width, e.patch_size, e.dim, e.depth, e.heads, config.frames,
                config.stp ? ("on@" + std::to_string(config.insertion_layer)).c_str() : "off");
  out << line << "\n# " << kConvention << "\n\n";
  out << "parameters\n";
  for (const auto& m : report.params) {
    std::snprintf(line, sizeof(line), "  %-14s %14llu\n", m.name.c_str(), static_cast<unsigned long long>(m.params));
    out << line;
  }
  std::snprintf(line, sizeof(line), "  %-14s %14llu\n\n", "total", static_cast<unsigned long long>(report.total_params()));
  out << line << "FLOPs per frame\n";
  for (const auto& m : report.flops) {
    std::snprintf(line, sizeof(line), "  %-14s %14.6fG\n", m.name.c_str(), m.flops / 1e9);
    out << line;
  }
  std::snprintf(line, sizeof(line), "  %-14s %14.6fG\n  %-14s %14.6fG\n", "total", report.total_flops() / 1e9,
                "total MACs", report.total_macs() / 1e9);
  out << line << "\ntokens per layer:";
  for (auto L : report.layer_tokens) out << ' ' << L;
  out << '\n';
  if (config.stp) {
    auto d = stp_delta(config);
    std::snprintf(line, sizeof(line),
                  "\nSTP delta: %lld params, %.6fG FLOPs (%.6fG MACs) per frame\n"
                  "  encoder growth %.6fG, STA %.6fG\n",
                  static_cast<long long>(d.params), d.flops / 1e9, d.flops / 2e9, d.encoder_growth / 1e9, d.sta / 1e9);
    out << line;
    std::snprintf(line, sizeof(line),
                  "  published reference (ViT-B/16, 288x144, T=6): +%.2fG on a %.2fG baseline, +%.2fM params; "
                  "these match the MAC column\n",
                  kReferenceStpG, kReferenceBaselineG, kReferenceStpParamsM);
    out << line;
  }
  return out.str();
}

std::string report_json(const ProfileConfig& config, const CostReport& report) {
  nlohmann::ordered_json j;
  j["convention"] = kConvention;
  j["config"] = {{"image_height", config.encoder.image_height}, {"image_width", config.encoder.image_width},
                 {"patch_size", config.encoder.patch_size},     {"dim", config.encoder.dim},
                 {"depth", config.encoder.depth},               {"heads", config.encoder.heads},
                 {"frames", config.frames},                     {"stp", config.stp},
                 {"insertion_layer", config.insertion_layer}};
  auto& params = j["params"];
  params = nlohmann::ordered_json::object();
  for (const auto& m : report.params) params[m.name] = m.params;
  j["total_params"] = report.total_params();
  auto& flops = j["flops_per_frame"];
  flops = nlohmann::ordered_json::object();
  for (const auto& m : report.flops) flops[m.name] = m.flops;
  j["total_flops_per_frame"] = report.total_flops();
  j["total_macs_per_frame"] = report.total_macs();
  j["layer_tokens"] = report.layer_tokens;
  j["reference_baseline_g"] = kReferenceBaselineG;
  if (config.stp) {
    auto d = stp_delta(config);
    j["stp_delta"] = {{"params", d.params},
                      {"flops", d.flops},
                      {"macs", d.flops / 2.0},
                      {"encoder_growth_flops", d.encoder_growth},
                      {"sta_flops", d.sta},
                      {"reference_g", kReferenceStpG}};
  } else {
    j["stp_delta"] = {{"params", 0}, {"flops", 0.0}, {"macs", 0.0}, {"encoder_growth_flops", 0.0}, {"sta_flops", 0.0}};
  }
  return j.dump(2) + "\n";
}

}  // namespace vld::profile
