#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "vld/config.hpp"
#include "vld/eval.hpp"
#include "vld/model.hpp"

namespace vld {

struct TrainData {
  data::Dataset train;
  data::Dataset test;
};

/// Loads root/train and root/test when data.root is set, otherwise renders
/// the synthetic benchmark in memory from the data spec and data seed.
TrainData load_data(const RunConfig& config);

/// Maps the training identities, in ascending order, onto classes 0..n-1.
std::map<std::size_t, std::size_t> class_map(const data::Dataset& train);

/// output_dir/<UTC timestamp>-seed<seed>; a numeric suffix avoids collisions.
std::filesystem::path make_run_dir(const RunConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> map_ir2vis;
  std::optional<double> map_vis2ir;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<EpochRecord> epochs;
  eval::RetrievalReport ir2vis;
  eval::RetrievalReport vis2ir;

  double final_map() const { return 0.5 * (ir2vis.map + vis2ir.map); }
};

/// Runs the full schedule and writes into run_dir: config.cfg (resolved),
/// metrics.jsonl, checkpoint.vldt, checkpoint_best.vldt, report_<dir>.json,
/// cmc_<dir>.csv and timing.txt (the only file holding wall-clock data).
/// A non-finite loss writes checkpoint_last_good.vldt and rethrows.
TrainResult train_model(const RunConfig& config, const TrainData& data, const std::filesystem::path& run_dir,
                        std::ostream* progress = nullptr);

/// Model shaped by the config with the class count of the training split.
ModelConfig resolved_model_config(const RunConfig& config, std::size_t train_identities);

struct EvalOutputs {
  eval::RetrievalReport report;
  std::string json;
  std::string csv;
};

EvalOutputs run_evaluation(const VldModel& model, const data::Dataset& test, eval::Direction direction);

}  // namespace vld
