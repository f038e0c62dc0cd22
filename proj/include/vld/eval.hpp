#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vld/data.hpp"
#include "vld/tensor.hpp"

namespace vld::eval {

enum class Direction { kIr2Vis, kVis2Ir };

std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view name);
data::Modality query_modality(Direction d);

struct GalleryIndex {
  Tensor features;  // [G, D], unit rows
  std::vector<std::size_t> labels;
  std::vector<data::Modality> modalities;
  std::vector<std::uint32_t> tracklet_ids;

  std::size_t size() const { return labels.size(); }
  /// Rows whose modality is m, in stored order.
  GalleryIndex select(data::Modality m) const;
};

/// Normalises every row of features and bundles the metadata.
GalleryIndex make_index(const Tensor& features, std::vector<std::size_t> labels,
                        std::vector<data::Modality> modalities, std::vector<std::uint32_t> tracklet_ids);

struct RetrievalReport {
  std::string direction;
  std::vector<double> cmc;  // cmc[k-1] = fraction of evaluated queries with a hit in the top k
  double map = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // queries whose identity is absent from the gallery
  std::vector<std::vector<std::uint32_t>> rankings;  // gallery tracklet ids, best first, per query

  double rank(std::size_t k) const;
};

/// Cosine ranking of the gallery for every query, ties broken by ascending
/// tracklet id. Queries without any same-identity gallery item are excluded
/// from CMC and mAP and counted.
RetrievalReport evaluate(const GalleryIndex& queries, const GalleryIndex& gallery, std::string direction = "");

/// Splits a mixed index by modality and evaluates one protocol direction.
RetrievalReport evaluate_direction(const GalleryIndex& all, Direction direction);

std::string report_json(const RetrievalReport& report);
std::string cmc_csv(const RetrievalReport& report);

}  // namespace vld::eval
