#include "vld/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vld/errors.hpp"

namespace vld::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 60, kRight = 190, kTop = 30, kBottom = 50;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Curve parse_cmc_csv(const std::string& text, const std::string& label, const std::string& origin) {
  Curve curve{label, {}};
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    return DataError(origin + ":" + std::to_string(lineno) + ": " + what);
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "rank,value") throw fail("expected header 'rank,value', got '" + line + "'");
      header = true;
      continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw fail("expected 'rank,value', got '" + line + "'");
    }
    std::size_t rank = 0;
    double value = 0.0;
    try {
      std::size_t used = 0;
      const auto rs = line.substr(0, comma), vs = line.substr(comma + 1);
      const long long r = std::stoll(rs, &used);
      if (used != rs.size() || r < 1) throw std::invalid_argument("rank");
      rank = static_cast<std::size_t>(r);
      value = std::stod(vs, &used);
      if (used != vs.size()) throw std::invalid_argument("value");
    } catch (const std::logic_error&) {
      throw fail("malformed row '" + line + "'");
    }
    if (rank != curve.values.size() + 1) {
      throw fail("rank " + std::to_string(rank) + " out of sequence, expected " +
                 std::to_string(curve.values.size() + 1));
    }
    if (!(value >= 0.0 && value <= 1.0)) throw fail("value " + line.substr(comma + 1) + " outside [0, 1]");
    curve.values.push_back(value);
  }
  if (!header) throw DataError(origin + ": empty CMC file");
  if (curve.values.empty()) throw DataError(origin + ": no CMC rows");
  return curve;
}

Curve load_cmc_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_cmc_csv(text.str(), path.stem().string(), path.string());
}

std::string render_svg(const std::vector<Curve>& curves, std::size_t max_rank) {
  if (curves.empty()) throw DataError("plot: no curves");
  std::size_t ranks = 1;
  for (const auto& c : curves) ranks = std::max(ranks, std::min(c.values.size(), max_rank));
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto x_of = [&](std::size_t rank) {
    return ranks == 1 ? kLeft + pw / 2 : kLeft + pw * static_cast<double>(rank - 1) / static_cast<double>(ranks - 1);
  };
  auto y_of = [&](double v) { return kTop + ph * (1.0 - v); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0, y = y_of(v);
    s << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(kLeft + pw) << "\" y2=\"" << fmt(y)
      << "\" stroke=\"#dddddd\"/>\n";
    s << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << fmt(v)
      << "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, (ranks + 9) / 10);
  for (std::size_t r = 1; r <= ranks; r += step) {
    s << "<text x=\"" << fmt(x_of(r)) << "\" y=\"" << fmt(kTop + ph + 18) << "\" text-anchor=\"middle\">" << r
      << "</text>\n";
  }
  s << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << fmt(kLeft + pw / 2) << "\" y=\"" << fmt(kHeight - 12) << "\" text-anchor=\"middle\">rank</text>\n";
  s << "<text x=\"16\" y=\"" << fmt(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fmt(kTop + ph / 2) << ")\">matching rate</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = kPalette[i % std::size(kPalette)];
    const std::size_t n = std::min(c.values.size(), ranks);
    s << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t r = 1; r <= n; ++r) {
      s << (r > 1 ? " " : "") << fmt(x_of(r)) << ',' << fmt(y_of(c.values[r - 1]));
    }
    s << "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    const double lx = kLeft + pw + 15;
    s << "<g class=\"legend\"><line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 20)
      << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << fmt(lx + 26)
      << "\" y=\"" << fmt(ly + 4) << "\">" << escape(c.label) << "</text></g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace vld::plot
