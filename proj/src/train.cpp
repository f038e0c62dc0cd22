#include "vld/train.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "vld/checkpoint.hpp"
#include "vld/errors.hpp"

namespace vld {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSamplerStream = 0x5A3D;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

class MetricsLog {
 public:
  explicit MetricsLog(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot open metrics log '" + path.string() + "'");
  }
  void write(const nlohmann::ordered_json& line) {
    out_ << line.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

nlohmann::ordered_json part_fields(const LossParts& parts) {
  nlohmann::ordered_json j;
  auto put = [&](const char* name, const std::optional<Tensor>& t) {
    if (t) j[name] = t->item();
  };
  put("id_cls", parts.id_cls);
  put("wrt_cls", parts.wrt_cls);
  put("v2t", parts.v2t);
  put("id_hub", parts.id_hub);
  put("wrt_hub", parts.wrt_hub);
  return j;
}

}  // namespace

TrainData load_data(const RunConfig& config) {
  if (config.data_root.empty()) {
    auto [train, test] = data::synthesize(config.data, config.data_seed);
    return {std::move(train), std::move(test)};
  }
  fs::path root(config.data_root);
  if (!fs::exists(root / "train" / "manifest.tsv")) {
    throw DataError("no dataset at '" + root.string() + "' (run gen-data first or leave data.root empty)");
  }
  return {data::load_split(root / "train"), data::load_split(root / "test")};
}

std::map<std::size_t, std::size_t> class_map(const data::Dataset& train) {
  std::map<std::size_t, std::size_t> out;
  for (auto id : train.identities()) out.emplace(id, out.size());
  return out;
}

fs::path make_run_dir(const RunConfig& config) {
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&now));
  fs::path base = fs::path(config.output_dir) / (std::string(stamp) + "-seed" + std::to_string(config.seed));
  fs::path dir = base;
  for (int i = 1; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  fs::create_directories(dir);
  return dir;
}

ModelConfig resolved_model_config(const RunConfig& config, std::size_t train_identities) {
  ModelConfig m = config.model;
  m.identities = train_identities;
  return m;
}

EvalOutputs run_evaluation(const VldModel& model, const data::Dataset& test, eval::Direction direction) {
  auto index = extract_features(model, test);
  EvalOutputs out;
  out.report = eval::evaluate_direction(index, direction);
  out.json = eval::report_json(out.report);
  out.csv = eval::cmc_csv(out.report);
  return out;
}

TrainResult train_model(const RunConfig& config, const TrainData& data, const fs::path& run_dir,
                        std::ostream* progress) {
  config.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  fs::create_directories(run_dir);
  write_text(run_dir / "config.cfg", to_text(config));

  const auto classes = class_map(data.train);
  VldModel model(resolved_model_config(config, classes.size()), config.seed);
  ParameterList params = model.parameters();
  Adam adam(model.trainable_parameters(), config.train.adam);
  MetricsLog log(run_dir / "metrics.jsonl");

  Rng sampler(config.seed, kSamplerStream);
  const auto steps_per_epoch = data::epoch_groups(config.train.batch, data.train, sampler).size();
  sampler = Rng(config.seed, kSamplerStream);
  const std::size_t total_steps = steps_per_epoch * config.train.epochs;

  TrainResult result;
  result.run_dir = run_dir;
  double best_map = -1.0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    double loss_sum = 0.0;
    auto groups = data::epoch_groups(config.train.batch, data.train, sampler);
    for (const auto& group : groups) {
      auto batch = data::sample_batch(config.train.batch, data.train, group, config.train.augment, sampler);
      std::vector<std::size_t> labels;
      for (auto id : batch.labels) labels.push_back(classes.at(id));

      const double lr = cosine_lr(step, total_steps, config.train.base_lr);
      LossParts parts;
      Tensor loss;
      try {
        loss = model.loss(batch.pixels, labels, &parts);
      } catch (const DivergenceError& err) {
        io::save_parameters(run_dir / "checkpoint_last_good.vldt", params);
        log.write({{"kind", "abort"}, {"epoch", epoch}, {"step", step}, {"reason", err.what()}});
        throw;
      }
      adam.zero_grad();
      loss.backward();
      adam.step(lr);

      nlohmann::ordered_json line{{"kind", "step"}, {"epoch", epoch}, {"step", step}, {"lr", lr},
                                  {"loss", loss.item()}};
      line.update(part_fields(parts));
      log.write(line);
      loss_sum += loss.item();
      ++step;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(groups.size());
    log.write({{"kind", "epoch"}, {"epoch", epoch}, {"mean_loss", record.mean_loss}});
    if (progress) *progress << "epoch " << epoch << "/" << config.train.epochs << " loss " << record.mean_loss;

    if (epoch % config.train.eval_every == 0 || epoch == config.train.epochs) {
      auto a = run_evaluation(model, data.test, eval::Direction::kIr2Vis);
      auto b = run_evaluation(model, data.test, eval::Direction::kVis2Ir);
      record.map_ir2vis = a.report.map;
      record.map_vis2ir = b.report.map;
      for (const auto* r : {&a.report, &b.report}) {
        log.write({{"kind", "eval"}, {"epoch", epoch}, {"direction", r->direction}, {"rank1", r->rank(1)},
                   {"rank5", r->rank(5)}, {"rank10", r->rank(10)}, {"map", r->map}});
      }
      const double mean_map = 0.5 * (a.report.map + b.report.map);
      if (progress) *progress << " mAP ir2vis " << a.report.map << " vis2ir " << b.report.map;
      if (mean_map > best_map) {
        best_map = mean_map;
        io::save_parameters(run_dir / "checkpoint_best.vldt", params);
        log.write({{"kind", "best"}, {"epoch", epoch}, {"map", mean_map}});
      }
      if (epoch == config.train.epochs) {
        write_text(run_dir / "report_ir2vis.json", a.json);
        write_text(run_dir / "cmc_ir2vis.csv", a.csv);
        write_text(run_dir / "report_vis2ir.json", b.json);
        write_text(run_dir / "cmc_vis2ir.csv", b.csv);
        result.ir2vis = std::move(a.report);
        result.vis2ir = std::move(b.report);
      }
    }
    if (progress) *progress << std::endl;
    result.epochs.push_back(record);
  }
  io::save_parameters(run_dir / "checkpoint.vldt", params);

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  write_text(run_dir / "timing.txt", "wall_seconds " + std::to_string(seconds) + "\n");
  return result;
}

}  // namespace vld
