#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vld/checkpoint.hpp"
#include "vld/config.hpp"
#include "vld/errors.hpp"
#include "vld/plot.hpp"
#include "vld/profiler.hpp"
#include "vld/train.hpp"

namespace fs = std::filesystem;
using namespace vld;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigExit = 2,
  kDataExit = 3,
  kDivergenceExit = 4,
  kLoadExit = 5,
};

struct ConfigOptions {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("-c,--config", path, "run config (flat 'section.key = value' file)");
    if (required) opt->required();
    cmd->add_option("-s,--set", overrides, "override one config key, e.g. --set train.epochs=2");
  }

  RunConfig load() const {
    RunConfig config = path.empty() ? RunConfig{} : load_config(path);
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      set_config_value(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    apply_env_overrides(config);
    config.validate();
    return config;
  }
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<eval::Direction> directions_of(const std::string& name) {
  if (name == "both") return {eval::Direction::kIr2Vis, eval::Direction::kVis2Ir};
  return {eval::parse_direction(name)};
}

int gen_data(const ConfigOptions& opts, const std::string& out) {
  RunConfig config = opts.load();
  fs::path root = out.empty() ? fs::path(config.data_root) : fs::path(out);
  if (root.empty()) throw ConfigError("gen-data needs --out or data.root");
  data::generate(config.data, config.data_seed, root);
  std::cout << "wrote " << (root / "train").string() << " and " << (root / "test").string() << "\n";
  return kOk;
}

int train(const ConfigOptions& opts, bool quiet) {
  RunConfig config = opts.load();
  auto data = load_data(config);
  fs::path run_dir = make_run_dir(config);
  std::cout << "run directory " << run_dir.string() << std::endl;
  auto result = train_model(config, data, run_dir, quiet ? nullptr : &std::cout);
  std::cout << "final mAP ir2vis " << result.ir2vis.map << " vis2ir " << result.vis2ir.map << "\n";
  return kOk;
}

int evaluate(const ConfigOptions& opts, const std::string& checkpoint, const std::string& direction,
             const std::string& out) {
  RunConfig config = opts.load();
  const auto dirs = directions_of(direction);
  auto data = load_data(config);
  VldModel model(resolved_model_config(config, class_map(data.train).size()), config.seed);
  ParameterList params = model.parameters();
  io::load_parameters(checkpoint, params);
  fs::path out_dir = out.empty() ? fs::path(checkpoint).parent_path() : fs::path(out);
  if (out_dir.empty()) out_dir = ".";
  for (auto d : dirs) {
    auto result = run_evaluation(model, data.test, d);
    const std::string name(eval::direction_name(d));
    write_file(out_dir / ("report_" + name + ".json"), result.json);
    write_file(out_dir / ("cmc_" + name + ".csv"), result.csv);
    std::cout << name << " rank1 " << result.report.rank(1) << " rank5 " << result.report.rank(5) << " rank10 "
              << result.report.rank(10) << " mAP " << result.report.map << " (" << result.report.evaluated
              << " queries, " << result.report.excluded << " excluded)\n";
  }
  return kOk;
}

int profile_cmd(const ConfigOptions& opts, bool no_stp, const std::string& out) {
  RunConfig config = opts.load();
  profile::ProfileConfig pc;
  pc.encoder = config.model.encoder;
  pc.frames = config.model.frames;
  pc.stp = config.model.stp && !no_stp;
  pc.insertion_layer = config.model.insertion_layer;
  auto report = profile::analyze(pc);
  const auto text = profile::report_text(pc, report);
  std::cout << text;
  if (!out.empty()) {
    write_file(fs::path(out) / "profile.txt", text);
    write_file(fs::path(out) / "profile.json", profile::report_json(pc, report));
  } else {
    std::cout << profile::report_json(pc, report);
  }
  return kOk;
}

int plot_cmd(const std::vector<std::string>& inputs, const std::vector<std::string>& labels, const std::string& out,
             std::size_t max_rank) {
  if (!labels.empty() && labels.size() != inputs.size()) {
    throw ConfigError("--label given " + std::to_string(labels.size()) + " times for " +
                      std::to_string(inputs.size()) + " curves");
  }
  std::vector<plot::Curve> curves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    curves.push_back(plot::load_cmc_csv(inputs[i]));
    if (!labels.empty()) curves.back().label = labels[i];
  }
  write_file(out, plot::render_svg(curves, max_rank));
  std::cout << "wrote " << out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vld: video visible-infrared re-identification with spatial-temporal hubs and language prompts"};
  app.require_subcommand(1);

  ConfigOptions gen_opts, train_opts, eval_opts, profile_opts;
  std::string gen_out, eval_checkpoint, eval_direction = "both", eval_out, profile_out, plot_out = "cmc.svg";
  bool quiet = false, no_stp = false;
  std::vector<std::string> plot_inputs, plot_labels;
  std::size_t max_rank = 20;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic benchmark to disk (train/ and test/)");
  gen_opts.attach(gen, false);
  gen->add_option("-o,--out", gen_out, "dataset root (defaults to data.root)");

  auto* tr = app.add_subcommand("train", "train a model; all outputs land in <output_dir>/<timestamp>-seed<seed>");
  train_opts.attach(tr, true);
  tr->add_flag("-q,--quiet", quiet, "no per-epoch progress");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval_opts.attach(ev, true);
  ev->add_option("--checkpoint", eval_checkpoint, "checkpoint .vldt file")->required();
  ev->add_option("-d,--direction", eval_direction, "ir2vis, vis2ir or both")
      ->check(CLI::IsMember({"ir2vis", "vis2ir", "both"}));
  ev->add_option("-o,--out", eval_out, "report directory (defaults to the checkpoint's directory)");

  auto* pr = app.add_subcommand("profile", "parameter and FLOP counts for the configured model");
  profile_opts.attach(pr, false);
  pr->add_flag("--no-stp", no_stp, "profile without the hub and STA");
  pr->add_option("-o,--out", profile_out, "write profile.txt and profile.json here instead of printing the JSON");

  auto* pl = app.add_subcommand("plot", "overlay CMC curves from cmc_*.csv files into one SVG");
  pl->add_option("csv", plot_inputs, "CMC CSV files")->required();
  pl->add_option("-l,--label", plot_labels, "legend label per curve (defaults to file stems)");
  pl->add_option("-o,--out", plot_out, "output SVG path");
  pl->add_option("--max-rank", max_rank, "last rank drawn")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (*gen) return gen_data(gen_opts, gen_out);
    if (*tr) return train(train_opts, quiet);
    if (*ev) return evaluate(eval_opts, eval_checkpoint, eval_direction, eval_out);
    if (*pr) return profile_cmd(profile_opts, no_stp, profile_out);
    if (*pl) return plot_cmd(plot_inputs, plot_labels, plot_out, max_rank);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergenceExit;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return kLoadExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
