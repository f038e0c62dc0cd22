#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"

namespace vld {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
};

Run vld(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " '" + VLD_CLI_PATH + "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) r.out.append(buf, n);
  int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config_path(const std::string& name) {
  return (fs::path(VLD_SOURCE_DIR) / "configs" / name).string();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string tiny() {
  return " -c '" + config_path("desk.cfg") + "'" +
         " -s data.identities=6 -s data.train_identities=4 -s data.tracklets_per_identity=2 -s data.frames=2"
         " -s data.height=16 -s data.width=8 -s encoder.patch_size=8 -s encoder.depth=2 -s encoder.dim=16"
         " -s encoder.heads=2 -s stp.insertion_layer=1 -s imlp.slots=2 -s imlp.text_layers=1"
         " -s train.epochs=1 -s train.identities_per_batch=2 -s train.tracklets_per_identity=1";
}

TEST(Cli, HelpListsSubcommands) {
  auto r = vld("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"gen-data", "train", "eval", "profile", "plot"}) EXPECT_NE(r.out.find(sub), std::string::npos);
  EXPECT_EQ(vld("train --help").code, 0);
}

TEST(Cli, ExitCodes) {
  testing::TempDir dir("cli-codes");
  EXPECT_EQ(vld("no-such-command").code, 2);
  EXPECT_EQ(vld("profile -c " + (dir.path() / "missing.cfg").string()).code, 2);
  std::ofstream(dir.path() / "bad.cfg") << "seed = 1\nbogus = 3\n";
  auto bad = vld("profile -c " + (dir.path() / "bad.cfg").string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find(":2:"), std::string::npos);
  EXPECT_EQ(vld("profile -s encoder.depth=zero").code, 2);
  std::ofstream(dir.path() / "bad.csv") << "rank,value\n1,x\n";
  EXPECT_EQ(vld("plot " + (dir.path() / "bad.csv").string()).code, 3);
  std::ofstream(dir.path() / "junk.vldt") << "not a checkpoint";
  EXPECT_EQ(vld("eval --checkpoint " + (dir.path() / "junk.vldt").string() + tiny()).code, 5);
  EXPECT_EQ(vld("train -q -s data.root=/nonexistent/vld" + tiny()).code, 3);
}

TEST(Cli, ProfileFullSizeConfig) {
  auto r = vld("profile -c " + config_path("paper.cfg"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("2391552"), std::string::npos);
  testing::TempDir dir("cli-profile");
  ASSERT_EQ(vld("profile --no-stp -c " + config_path("paper.cfg") + " -o " + dir.path().string()).code, 0);
  auto j = nlohmann::json::parse(slurp(dir.path() / "profile.json"));
  EXPECT_EQ(j["stp_delta"]["params"], 0);
  EXPECT_EQ(j["stp_delta"]["flops"], 0.0);
  EXPECT_EQ(j["total_params"], 85772544);
  EXPECT_TRUE(fs::exists(dir.path() / "profile.txt"));
}

TEST(Cli, GenData) {
  testing::TempDir dir("cli-gen");
  auto r = vld("gen-data -o " + dir.path().string() + tiny());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir.path() / "train" / "manifest.tsv"));
  EXPECT_TRUE(fs::exists(dir.path() / "test" / "manifest.tsv"));
}

TEST(Cli, SeedFromEnvironment) {
  testing::TempDir dir("cli-env");
  const std::string runs = (dir.path() / "runs").string();
  auto r = vld("train -q -s output_dir=" + runs + tiny(), "VLD_SEED=3");
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(runs)) {
    EXPECT_NE(e.path().filename().string().find("-seed3"), std::string::npos);
    EXPECT_NE(slurp(e.path() / "config.cfg").find("seed = 3\n"), std::string::npos);
    ++seen;
  }
  EXPECT_EQ(seen, 1u);
}

TEST(Cli, TrainEvalPlot) {
  testing::TempDir dir("cli-train");
  const std::string runs = (dir.path() / "runs").string();
  auto train = vld("train -q -s output_dir=" + runs + tiny());
  ASSERT_EQ(train.code, 0) << train.out;
  fs::path run;
  for (const auto& e : fs::directory_iterator(runs)) run = e.path();
  ASSERT_FALSE(run.empty());
  EXPECT_NE(run.filename().string().find("-seed1"), std::string::npos);

  const std::string out = (dir.path() / "eval").string();
  auto ev = vld("eval --checkpoint " + (run / "checkpoint.vldt").string() + " -c " + (run / "config.cfg").string() +
                " --direction both -o " + out);
  ASSERT_EQ(ev.code, 0) << ev.out;
  for (const char* d : {"ir2vis", "vis2ir"}) {
    EXPECT_EQ(slurp(fs::path(out) / ("report_" + std::string(d) + ".json")),
              slurp(run / ("report_" + std::string(d) + ".json")))
        << d;
  }

  auto mismatch = vld("eval --checkpoint " + (run / "checkpoint.vldt").string() + " -c " +
                      (run / "config.cfg").string() + " -s encoder.dim=32 -o " + out);
  EXPECT_EQ(mismatch.code, 5) << mismatch.out;

  const std::string svg = (dir.path() / "cmc.svg").string();
  auto pl = vld("plot " + (run / "cmc_ir2vis.csv").string() + " " + (run / "cmc_vis2ir.csv").string() + " -o " + svg);
  ASSERT_EQ(pl.code, 0) << pl.out;
  const auto first = slurp(svg);
  EXPECT_NE(first.find("cmc_vis2ir"), std::string::npos);
  ASSERT_EQ(vld("plot " + (run / "cmc_ir2vis.csv").string() + " " + (run / "cmc_vis2ir.csv").string() + " -o " + svg).code, 0);
  EXPECT_EQ(slurp(svg), first);
}

}  // namespace
}  // namespace vld
