#include "denseil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "denseil/checkpoint.hpp"

namespace denseil {

void EvalTable::validate() const {
  if (query_cams.size() != query_ids.size() || gallery_cams.size() != gallery_ids.size()) {
    throw std::invalid_argument("eval table: label arrays differ in length");
  }
  if (distances.size() != num_queries() * num_gallery()) {
    throw std::invalid_argument("eval table: distance matrix has wrong size");
  }
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) {
      throw std::invalid_argument("eval table: distances must be finite and nonnegative");
    }
  }
}

std::vector<double> pairwise_distances(const Tensor& queries, const Tensor& gallery) {
  if (queries.rank() != 2 || gallery.rank() != 2) {
    throw ShapeError("pairwise_distances: expected matrices");
  }
  if (queries.dim(1) != gallery.dim(1)) {
    throw ShapeError("pairwise_distances: dimension mismatch " + shape_str(queries.shape()) +
                     " vs " + shape_str(gallery.shape()));
  }
  const std::size_t nq = queries.dim(0), ng = gallery.dim(0), d = queries.dim(1);
  auto qv = queries.values();
  auto gv = gallery.values();
  std::vector<double> out(nq * ng);
#pragma omp parallel for schedule(static)
  for (long qi = 0; qi < static_cast<long>(nq); ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    for (std::size_t g = 0; g < ng; ++g) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = qv[q * d + k] - gv[g * d + k];
        s += diff * diff;
      }
      out[q * ng + g] = std::sqrt(s);
    }
  }
  return out;
}

std::vector<std::size_t> ranked_gallery(const EvalTable& table, std::size_t q) {
  std::vector<std::size_t> order;
  for (std::size_t g = 0; g < table.num_gallery(); ++g) {
    const bool junk = table.filter_same_camera &&
                      table.gallery_ids[g] == table.query_ids[q] &&
                      table.gallery_cams[g] == table.query_cams[q];
    if (!junk) order.push_back(g);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.distance(q, a) < table.distance(q, b);
  });
  return order;
}

bool query_is_valid(const EvalTable& table, std::size_t q) {
  for (std::size_t g = 0; g < table.num_gallery(); ++g) {
    if (table.gallery_ids[g] != table.query_ids[q]) continue;
    if (!table.filter_same_camera || table.gallery_cams[g] != table.query_cams[q]) return true;
  }
  return false;
}

std::size_t excluded_queries(const EvalTable& table) {
  std::size_t n = 0;
  for (std::size_t q = 0; q < table.num_queries(); ++q) n += query_is_valid(table, q) ? 0 : 1;
  return n;
}

namespace {

std::size_t valid_count_or_throw(const EvalTable& table) {
  table.validate();
  const std::size_t valid = table.num_queries() - excluded_queries(table);
  if (valid == 0) throw std::invalid_argument("eval table: no query has a valid match");
  return valid;
}

}  // namespace

std::vector<double> cmc_curve(const EvalTable& table, int max_rank) {
  if (max_rank < 1) throw std::invalid_argument("cmc_curve: max_rank must be >= 1");
  const std::size_t valid = valid_count_or_throw(table);
  std::vector<double> hits(static_cast<std::size_t>(max_rank), 0.0);
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    if (!query_is_valid(table, q)) continue;
    const auto order = ranked_gallery(table, q);
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (table.gallery_ids[order[r]] != table.query_ids[q]) continue;
      for (std::size_t k = r; k < hits.size(); ++k) hits[k] += 1.0;
      break;
    }
  }
  for (auto& h : hits) h /= static_cast<double>(valid);
  return hits;
}

double mean_ap(const EvalTable& table) {
  const std::size_t valid = valid_count_or_throw(table);
  double total = 0.0;
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    if (!query_is_valid(table, q)) continue;
    const auto order = ranked_gallery(table, q);
    double ap = 0.0;
    std::size_t found = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (table.gallery_ids[order[r]] != table.query_ids[q]) continue;
      ++found;
      ap += static_cast<double>(found) / static_cast<double>(r + 1);
    }
    total += ap / static_cast<double>(found);
  }
  return total / static_cast<double>(valid);
}

std::vector<std::pair<std::string, double>> RankMetrics::rows() const {
  return {{"mAP", map}, {"R-1", r1}, {"R-5", r5}, {"R-10", r10}, {"R-20", r20}};
}

RankMetrics evaluate_table(const EvalTable& table) {
  RankMetrics m;
  const auto cmc = cmc_curve(table, 20);
  m.map = mean_ap(table);
  m.r1 = cmc[0];
  m.r5 = cmc[4];
  m.r10 = cmc[9];
  m.r20 = cmc[19];
  m.excluded_queries = excluded_queries(table);
  m.valid_queries = table.num_queries() - m.excluded_queries;
  return m;
}

std::string metrics_csv(const RankMetrics& m) {
  std::string out = "metric,value\n";
  char buf[64];
  for (const auto& [name, value] : m.rows()) {
    std::snprintf(buf, sizeof buf, "%.6f", value);
    out += name + "," + buf + "\n";
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const RankMetrics& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_csv(m);
}

}  // namespace denseil
