#include <gtest/gtest.h>

#include <fstream>
#include <regex>

#include "support.hpp"
#include "vld/errors.hpp"
#include "vld/plot.hpp"

namespace vld {
namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

std::string parse_error(const std::string& text) {
  try {
    plot::parse_cmc_csv(text, "x", "c.csv");
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

TEST(Plot, ParsesCmcCsv) {
  auto c = plot::parse_cmc_csv("rank,value\n1,0.5\n2,0.75\n3,1\n", "run");
  EXPECT_EQ(c.label, "run");
  EXPECT_EQ(c.values, (std::vector<double>{0.5, 0.75, 1.0}));
}

TEST(Plot, PerfectRetrievalIsFlatAtOne) {
  std::string csv = "rank,value\n";
  for (int r = 1; r <= 10; ++r) csv += std::to_string(r) + ",1\n";
  auto svg = plot::render_svg({plot::parse_cmc_csv(csv, "perfect")});
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, std::regex("class=\"curve\"[^>]*points=\"([^\"]*)\"")));
  std::string points = m[1];
  std::regex pair("([0-9.]+),([0-9.]+)");
  std::set<std::string> ys;
  std::size_t n = 0;
  for (auto it = std::sregex_iterator(points.begin(), points.end(), pair); it != std::sregex_iterator(); ++it) {
    ys.insert((*it)[2]);
    ++n;
  }
  EXPECT_EQ(n, 10u);
  ASSERT_EQ(ys.size(), 1u);
  // y of the 1.0 gridline
  EXPECT_NE(svg.find("y1=\"" + *ys.begin() + "\""), std::string::npos);
}

TEST(Plot, OneLegendEntryPerCurve) {
  auto a = plot::parse_cmc_csv("rank,value\n1,0.2\n2,0.4\n", "B");
  auto b = plot::parse_cmc_csv("rank,value\n1,0.3\n2,0.6\n", "B+STP & <IMLP>");
  auto svg = plot::render_svg({a, b});
  EXPECT_EQ(count(svg, "class=\"legend\""), 2u);
  EXPECT_EQ(count(svg, "class=\"curve\""), 2u);
  EXPECT_NE(svg.find("B+STP &amp; &lt;IMLP&gt;"), std::string::npos);
}

TEST(Plot, ByteIdenticalFromIdenticalInputs) {
  testing::TempDir dir("plot");
  std::ofstream(dir.path() / "cmc_ir2vis.csv") << "rank,value\n1,0.25\n2,0.5\n3,0.8\n";
  auto c1 = plot::load_cmc_csv(dir.path() / "cmc_ir2vis.csv");
  auto c2 = plot::load_cmc_csv(dir.path() / "cmc_ir2vis.csv");
  EXPECT_EQ(c1.label, "cmc_ir2vis");
  EXPECT_EQ(plot::render_svg({c1}), plot::render_svg({c2}));
}

TEST(Plot, MaxRankTruncates) {
  auto c = plot::parse_cmc_csv("rank,value\n1,0.2\n2,0.4\n3,0.6\n4,0.8\n", "x");
  auto svg = plot::render_svg({c}, 2);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, std::regex("points=\"([^\"]*)\"")));
  EXPECT_EQ(count(m[1], ","), 2u);
}

TEST(Plot, MalformedCsvNamesTheLine) {
  EXPECT_NE(parse_error("rank,value\n1,0.5\n2,oops\n").find("c.csv:3"), std::string::npos);
  EXPECT_NE(parse_error("rank,value\n1,0.5\n3,0.6\n").find("c.csv:3"), std::string::npos);
  EXPECT_NE(parse_error("rank,value\n1,1.5\n").find("c.csv:2"), std::string::npos);
  EXPECT_NE(parse_error("r,v\n1,0.5\n").find("c.csv:1"), std::string::npos);
  EXPECT_FALSE(parse_error("").empty());
  EXPECT_THROW(plot::render_svg({}), DataError);
  EXPECT_THROW(plot::load_cmc_csv("/nonexistent/cmc.csv"), DataError);
}

}  // namespace
}  // namespace vld
