#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vld/data.hpp"
#include "vld/model.hpp"
#include "vld/optim.hpp"

namespace vld {

struct TrainConfig {
  std::size_t epochs = 8;
  double base_lr = 2.5e-5;
  AdamConfig adam;
  data::BatchPlan batch;
  data::AugmentConfig augment;
  std::size_t eval_every = 1;  // epochs between test evaluations; the last epoch is always evaluated
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  std::string data_root;  // empty: synthesise in memory from `data`
  std::uint64_t data_seed = 1;
  data::SyntheticSpec data;
  ModelConfig model;
  TrainConfig train;

  /// Cross-field checks (image size vs encoder, T vs data frames, ...).
  void validate() const;
};

/// Flat "section.key = value" text. '#' starts a comment. Unknown keys,
/// duplicate keys and malformed values raise ConfigError with the line number.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies a single key (as in the file) on top of an existing config.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Every key with its resolved value, one per line, in a fixed order.
/// parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

std::vector<std::string> config_keys();

/// Applies the VLD_SEED environment variable, when set.
void apply_env_overrides(RunConfig& config);

}  // namespace vld
