// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "vld/config.hpp"
#include "vld/profiler.hpp"
#include "vld/train.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& title, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << "criterion " << id << " " << (ok ? "PASS" : "FAIL") << "  " << title << ": " << detail << std::endl;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct SuiteResult {
  bool ok = false;
  int passed = 0;
  int failed = 0;
  double seconds = 0.0;
};

SuiteResult run_suite(const std::string& filter) {
  SuiteResult r;
  auto start = Clock::now();
  std::string cmd = std::string("'") + VLD_TESTS_PATH + "' --gtest_brief=1 '--gtest_filter=" + filter + "' 2>&1";
  std::string out;
  if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
    int status = ::pclose(pipe);
    r.ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  }
  r.seconds = seconds_since(start);
  std::smatch m;
  if (std::regex_search(out, m, std::regex("\\[  PASSED  \\] (\\d+) test"))) r.passed = std::stoi(m[1]);
  if (std::regex_search(out, m, std::regex("\\[  FAILED  \\] (\\d+) test"))) r.failed = std::stoi(m[1]);
  r.ok = r.ok && r.passed > 0;
  if (!r.ok) std::cout << out;
  return r;
}

std::string suite_detail(const SuiteResult& r) {
  return std::to_string(r.passed) + " passed, " + std::to_string(r.failed) + " failed, " + fmt("%.1fs", r.seconds);
}

vld::profile::ProfileConfig profile_of(const vld::RunConfig& c) {
  vld::profile::ProfileConfig p;
  p.encoder = c.model.encoder;
  p.frames = c.model.frames;
  p.stp = c.model.stp;
  p.insertion_layer = c.model.insertion_layer;
  return p;
}

void cost_criteria(const fs::path& configs) {
  auto config = vld::load_config(configs / "paper.cfg");
  auto start = Clock::now();
  auto with = profile_of(config);
  auto without = with;
  without.stp = false;
  const auto base = vld::profile::analyze(without);
  const auto delta = vld::profile::stp_delta(with);
  const double t1 = seconds_since(start);
  const double base_m = static_cast<double>(base.total_params()) / 1e6;
  verdict(1, delta.params == 2391552 && std::abs(base_m / 86.17 - 1.0) <= 0.02 && t1 < 1.0, "cost reproduction",
          "STP delta " + std::to_string(delta.params) + " params (expect 2391552), baseline " +
              fmt("%.3fM vs 86.17M (%+.2f%%), %.4fs", base_m, 100.0 * (base_m / 86.17 - 1.0), t1));

  start = Clock::now();
  const double base_macs = vld::profile::analyze(without).total_macs() / 1e9;
  const double delta_macs = vld::profile::stp_delta(with).flops / 2e9;
  const double t2 = seconds_since(start);
  const bool ok = std::abs(base_macs / 13.96 - 1.0) <= 0.10 && delta_macs >= 0.05 && delta_macs <= 0.5 && t2 < 1.0;
  verdict(2, ok, "FLOP bracket",
          fmt("baseline %.3fG MACs/frame vs 13.96G (%+.1f%%); STP delta %.4fG MACs/frame, published 0.12G; ",
              base_macs, 100.0 * (base_macs / 13.96 - 1.0), delta_macs) +
              fmt("counting a multiply-add as 2 FLOPs gives %.3fG and %.4fG; matrix products only; %.4fs",
                  2 * base_macs, 2 * delta_macs, t2));
}

struct Variant {
  const char* name;
  bool stp;
  bool imlp;
};

void ordering_and_determinism(const fs::path& configs, const fs::path& work) {
  auto base = vld::load_config(configs / "desk.cfg");
  const Variant variants[] = {{"B", false, false}, {"B+IMLP", false, true}, {"B+STP", true, false},
                              {"B+STP+IMLP", true, true}};
  const std::uint64_t seeds[] = {1, 2, 3};
  fs::remove_all(work);

  auto start = Clock::now();
  auto data = vld::load_data(base);
  double mean[4] = {0, 0, 0, 0};
  for (int v = 0; v < 4; ++v) {
    std::cout << "  " << variants[v].name << ":";
    for (auto seed : seeds) {
      auto c = base;
      c.seed = seed;
      c.model.stp = variants[v].stp;
      c.model.imlp = variants[v].imlp;
      auto dir = work / (std::string(variants[v].name) + "-seed" + std::to_string(seed));
      auto r = vld::train_model(c, data, dir);
      mean[v] += r.final_map() / 3.0;
      std::cout << fmt(" %.4f", r.final_map()) << std::flush;
    }
    std::cout << fmt("  mean %.4f", mean[v]) << std::endl;
  }
  const double minutes = seconds_since(start) / 60.0;
  const bool order = mean[3] >= mean[2] && mean[2] >= mean[0] && mean[1] >= mean[0];
  verdict(7, order && minutes < 10.0, "ablation ordering",
          fmt("mean mAP B %.4f, B+IMLP %.4f, B+STP %.4f, B+STP+IMLP %.4f", mean[0], mean[1], mean[2], mean[3]) +
              (order ? "; ordering holds" : "; ordering violated") + fmt("; %.1f min for 12 runs", minutes));

  auto c = base;
  c.seed = 1;
  const auto first = work / "B+STP+IMLP-seed1";
  const auto again = work / "rerun-seed1";
  vld::train_model(c, data, again);
  std::vector<std::string> differing;
  const char* files[] = {"checkpoint.vldt", "checkpoint_best.vldt", "metrics.jsonl", "config.cfg",
                         "report_ir2vis.json", "report_vis2ir.json", "cmc_ir2vis.csv", "cmc_vis2ir.csv"};
  for (const char* f : files)
    if (slurp(first / f) != slurp(again / f) || slurp(first / f).empty()) differing.push_back(f);
  std::string detail = differing.empty() ? "checkpoints, metrics log and reports byte-identical across two seed-1 runs"
                                         : "differing:";
  for (const auto& f : differing) detail += " " + f;
  verdict(8, differing.empty(), "determinism", detail);
}

}  // namespace

int main() {
  const fs::path configs = fs::path(VLD_SOURCE_DIR) / "configs";
  cost_criteria(configs);

  auto grads = run_suite(
      "OpsGradient.*:Attention.GradientCheck:Linear.ForwardAndGradient:WrtLoss.GradientCheck:"
      "V2tLoss.GradientCheckThroughPromptsAndScale:Sta.GradientCheck:Hub.EncoderWithHubGradientCheck:"
      "TransformerBlock.FanInInitAndGradient:VisionEncoder.EndToEndGradient:Model.EndToEndGradients*");
  verdict(3, grads.ok && grads.seconds < 120.0, "gradient suite",
          "per-op rel. err < 1e-4, end-to-end < 1e-3; " + suite_detail(grads));

  auto oracles = run_suite(
      "WrtLoss.HandBuilt*:WrtLoss.ClosedFormOnALine:WrtLoss.RandomBatchesMatchEnumeration:"
      "V2tLoss.MatchesScalarArithmeticOnTwoByThree:V2tLoss.UniformLogitsGiveLogIdentityCount:"
      "CrossEntropy.UniformLogitsGiveLogClassCount");
  verdict(4, oracles.ok, "formula oracles", suite_detail(oracles));

  auto retrieval = run_suite("Retrieval.MatchesBruteForceOracleOnRandomInstances");
  verdict(5, retrieval.ok, "retrieval oracle", "200 random instances, gallery <= 50; " + suite_detail(retrieval));

  auto invariants = run_suite(
      "Model.StpOffIsTheBaseline:Model.SharedInitialValuesSurviveBranchToggles:Hub.InsertionAtDepthIsExactlyTheBaseline:"
      "Hub.TransposeIsAnInvolution:Hub.CrossFrameGradientFlowsOnlyThroughTheHub:Hub.OneHubLayerKeepsFramesSeparate:"
      "FrozenTextEncoder.ReceivesNoGradientWhilePromptsDo:Model.FrozenTextEncoderGetsNoGradient:"
      "TemporalAveragePool.PermutationInvariant");
  verdict(6, invariants.ok, "mechanism invariants", suite_detail(invariants));

  ordering_and_determinism(configs, fs::current_path() / "acceptance_runs");

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
