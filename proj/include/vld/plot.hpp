#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vld::plot {

struct Curve {
  std::string label;
  std::vector<double> values;  // values[k] is the CMC at rank k + 1
};

/// Parses the "rank,value" CSV written by eval::cmc_csv. Ranks must run
/// 1, 2, ... and values lie in [0, 1]. Errors name origin and line.
Curve parse_cmc_csv(const std::string& text, const std::string& label, const std::string& origin = "<csv>");
Curve load_cmc_csv(const std::filesystem::path& path);

/// Overlays the curves on one SVG chart with one legend entry per curve.
/// The output depends only on the inputs.
std::string render_svg(const std::vector<Curve>& curves, std::size_t max_rank = 20);

}  // namespace vld::plot
