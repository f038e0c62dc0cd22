#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vld/vit.hpp"

namespace vld::profile {

struct ProfileConfig {
  EncoderConfig encoder;
  std::size_t frames = 4;
  bool stp = true;
  std::size_t insertion_layer = 2;
};

struct ModuleCount {
  std::string name;
  std::uint64_t params = 0;
};

/// FLOPs count one multiply-accumulate as 2. Softmax, layer norm, GELU and
/// residual additions are not counted.
struct ModuleFlops {
  std::string name;
  double flops = 0.0;
};

struct CostReport {
  std::vector<ModuleCount> params;
  std::vector<ModuleFlops> flops;  // per frame
  std::vector<std::size_t> layer_tokens;

  std::uint64_t total_params() const;
  double total_flops() const;
  double total_macs() const { return total_flops() / 2.0; }
  std::uint64_t params_of(const std::string& prefix) const;
  double flops_of(const std::string& prefix) const;
};

/// Parameters of one pre-norm block: 12D² + 13D.
std::uint64_t block_params(std::size_t dim);
/// Per-frame FLOPs of one block over L tokens: projections 8LD², scores and
/// mixing 4L²D, MLP 16LD².
double block_flops(std::size_t tokens, std::size_t dim);

/// Encoder (patch projection, CLS, positional embedding, blocks, final norm)
/// plus hub and STA when enabled. Classifier heads and prompts are excluded.
CostReport analyze(const ProfileConfig& config);

struct StpDelta {
  std::int64_t params = 0;
  double flops = 0.0;           // per frame
  double encoder_growth = 0.0;  // extra encoder FLOPs from hub rows, per frame
  double sta = 0.0;             // STA FLOPs attributed per frame
};

StpDelta stp_delta(const ProfileConfig& config);

std::string report_text(const ProfileConfig& config, const CostReport& report);
std::string report_json(const ProfileConfig& config, const CostReport& report);

}  // namespace vld::profile
