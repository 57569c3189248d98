#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "denseil/tensor.hpp"

namespace denseil {

/// Query/gallery labels plus the Q x G distance matrix (row-major).
struct EvalTable {
  std::vector<int> query_ids, query_cams;
  std::vector<int> gallery_ids, gallery_cams;
  std::vector<double> distances;
  /// Drop same-id same-camera gallery entries per query (standard
  /// cross-camera protocol). Disabled only for self-match sanity checks.
  bool filter_same_camera = true;

  std::size_t num_queries() const { return query_ids.size(); }
  std::size_t num_gallery() const { return gallery_ids.size(); }
  double distance(std::size_t q, std::size_t g) const {
    return distances[q * num_gallery() + g];
  }
  void validate() const;
};

/// Euclidean distances between rows of queries [Q x d] and gallery [G x d].
std::vector<double> pairwise_distances(const Tensor& queries, const Tensor& gallery);

/// Gallery indices for query q ranked by (distance, index), with same-id
/// same-camera entries removed when filtering is on.
std::vector<std::size_t> ranked_gallery(const EvalTable& table, std::size_t q);

/// True if query q has at least one valid same-id match.
bool query_is_valid(const EvalTable& table, std::size_t q);
std::size_t excluded_queries(const EvalTable& table);

/// CMC[k-1] = fraction of valid queries whose first hit is at rank <= k.
std::vector<double> cmc_curve(const EvalTable& table, int max_rank);
/// Mean over valid queries of average precision.
double mean_ap(const EvalTable& table);

struct RankMetrics {
  double map = 0.0;
  double r1 = 0.0, r5 = 0.0, r10 = 0.0, r20 = 0.0;
  std::size_t valid_queries = 0;
  std::size_t excluded_queries = 0;

  std::vector<std::pair<std::string, double>> rows() const;
};

RankMetrics evaluate_table(const EvalTable& table);
/// CSV with header "metric,value" and rows mAP, R-1, R-5, R-10, R-20.
std::string metrics_csv(const RankMetrics& m);
void write_metrics_csv(const std::filesystem::path& path, const RankMetrics& m);

}  // namespace denseil
