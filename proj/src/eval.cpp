#include "vld/eval.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vld/errors.hpp"
#include "vld/ops.hpp"

namespace vld::eval {

std::string_view direction_name(Direction d) { return d == Direction::kIr2Vis ? "ir2vis" : "vis2ir"; }

Direction parse_direction(std::string_view name) {
  if (name == "ir2vis") return Direction::kIr2Vis;
  if (name == "vis2ir") return Direction::kVis2Ir;
  throw ConfigError("unknown direction '" + std::string(name) + "' (expected ir2vis or vis2ir)");
}

data::Modality query_modality(Direction d) {
  return d == Direction::kIr2Vis ? data::Modality::kInfrared : data::Modality::kVisible;
}

GalleryIndex GalleryIndex::select(data::Modality m) const {
  const std::size_t D = features.shape()[1];
  GalleryIndex out;
  std::vector<double> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (modalities[i] != m) continue;
    auto v = features.values().subspan(i * D, D);
    rows.insert(rows.end(), v.begin(), v.end());
    out.labels.push_back(labels[i]);
    out.modalities.push_back(m);
    out.tracklet_ids.push_back(tracklet_ids[i]);
  }
  out.features = Tensor::from({out.labels.size(), D}, std::move(rows));
  return out;
}

GalleryIndex make_index(const Tensor& features, std::vector<std::size_t> labels,
                        std::vector<data::Modality> modalities, std::vector<std::uint32_t> tracklet_ids) {
  if (features.dim() != 2 || features.shape()[0] != labels.size() || labels.size() != modalities.size() ||
      labels.size() != tracklet_ids.size()) {
    throw ShapeError("gallery index: features " + shape_str(features.shape()) + " disagree with " +
                     std::to_string(labels.size()) + " labels");
  }
  return {ops::l2_normalize(features.detach()), std::move(labels), std::move(modalities), std::move(tracklet_ids)};
}

double RetrievalReport::rank(std::size_t k) const {
  if (cmc.empty() || k == 0) return 0.0;
  return cmc[std::min(k, cmc.size()) - 1];
}

RetrievalReport evaluate(const GalleryIndex& queries, const GalleryIndex& gallery, std::string direction) {
  for (auto qm : queries.modalities) {
    if (std::find(gallery.modalities.begin(), gallery.modalities.end(), qm) != gallery.modalities.end()) {
      throw ContractError("cross-modality evaluation needs disjoint query and gallery modalities");
    }
  }
  const std::size_t Q = queries.size(), G = gallery.size();
  if (G == 0) throw DataError("empty gallery");
  const std::size_t D = gallery.features.shape()[1];
  if (Q > 0 && queries.features.shape()[1] != D) {
    throw ShapeError("query dim " + std::to_string(queries.features.shape()[1]) + " != gallery dim " +
                     std::to_string(D));
  }

  RetrievalReport report;
  report.direction = std::move(direction);
  report.cmc.assign(G, 0.0);
  double ap_sum = 0.0;
  auto qv = queries.features.values();
  auto gv = gallery.features.values();
  std::vector<double> score(G);
  std::vector<std::size_t> order(G);
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t g = 0; g < G; ++g) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += qv[q * D + d] * gv[g * D + d];
      score[g] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return gallery.tracklet_ids[a] < gallery.tracklet_ids[b];
    });
    std::vector<std::uint32_t> ranking(G);
    for (std::size_t r = 0; r < G; ++r) ranking[r] = gallery.tracklet_ids[order[r]];
    report.rankings.push_back(std::move(ranking));

    std::size_t hits = 0, first = G;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < G; ++r) {
      if (gallery.labels[order[r]] != queries.labels[q]) continue;
      if (hits == 0) first = r;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) {
      ++report.excluded;
      continue;
    }
    ++report.evaluated;
    ap_sum += precision_sum / static_cast<double>(hits);
    for (std::size_t r = first; r < G; ++r) report.cmc[r] += 1.0;
  }
  if (report.evaluated > 0) {
    for (auto& c : report.cmc) c /= static_cast<double>(report.evaluated);
    report.map = ap_sum / static_cast<double>(report.evaluated);
  }
  return report;
}

RetrievalReport evaluate_direction(const GalleryIndex& all, Direction direction) {
  auto qm = query_modality(direction);
  auto gm = qm == data::Modality::kVisible ? data::Modality::kInfrared : data::Modality::kVisible;
  return evaluate(all.select(qm), all.select(gm), std::string(direction_name(direction)));
}

std::string report_json(const RetrievalReport& report) {
  nlohmann::ordered_json j;
  j["direction"] = report.direction;
  j["rank1"] = report.rank(1);
  j["rank5"] = report.rank(5);
  j["rank10"] = report.rank(10);
  j["map"] = report.map;
  j["evaluated_queries"] = report.evaluated;
  j["excluded_queries"] = report.excluded;
  return j.dump(2) + "\n";
}

std::string cmc_csv(const RetrievalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "rank,value\n";
  for (std::size_t r = 0; r < report.cmc.size(); ++r) out << r + 1 << ',' << report.cmc[r] << '\n';
  return out.str();
}

}  // namespace vld::eval
