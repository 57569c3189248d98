#include "denseil/losses.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace denseil {

using detail::Node;

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B x C]");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) throw ShapeError("cross_entropy: label count mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(c) + ")");
    }
  }
  auto lv = logits.values();
  std::vector<double> probs(b * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = lv.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    loss += lse - row[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(b);
  std::vector<int> ys(labels.begin(), labels.end());
  return detail::make_result(
      "cross_entropy", {}, {loss}, {logits},
      [b, c, probs = std::move(probs), ys = std::move(ys)](Node& self) {
        Node& p = self.parent(0);
        const double g = self.grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
            p.grad[i * c + j] += g * (probs[i * c + j] - onehot);
          }
        }
      });
}

namespace {

void check_triplet_batch(const Tensor& e, std::span<const int> labels) {
  if (e.rank() != 2) throw ShapeError("batch_hard_triplet: embeddings must be [B x d]");
  if (labels.size() != e.dim(0)) throw ShapeError("batch_hard_triplet: label count mismatch");
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  if (counts.size() < 2) {
    throw std::invalid_argument("batch_hard_triplet: batch holds a single identity");
  }
  for (auto [id, n] : counts) {
    if (n < 2) {
      throw std::invalid_argument("batch_hard_triplet: identity " + std::to_string(id) +
                                  " has a single sample");
    }
  }
}

std::vector<double> distance_matrix(const Tensor& e) {
  const std::size_t b = e.dim(0), d = e.dim(1);
  auto v = e.values();
  std::vector<double> dist(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = v[i * d + k] - v[j * d + k];
        s += diff * diff;
      }
      dist[i * b + j] = dist[j * b + i] = std::sqrt(s);
    }
  }
  return dist;
}

TripletSelection select(const std::vector<double>& dist, std::size_t b,
                        std::span<const int> labels) {
  TripletSelection sel;
  for (std::size_t a = 0; a < b; ++a) {
    std::size_t pos = b, neg = b;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (pos == b || dist[a * b + j] > dist[a * b + pos]) pos = j;
      } else {
        if (neg == b || dist[a * b + j] < dist[a * b + neg]) neg = j;
      }
    }
    sel.positive.push_back(pos);
    sel.negative.push_back(neg);
  }
  return sel;
}

}  // namespace

TripletSelection hardest_pairs(const Tensor& embeddings, std::span<const int> labels) {
  check_triplet_batch(embeddings, labels);
  return select(distance_matrix(embeddings), embeddings.dim(0), labels);
}

Tensor batch_hard_triplet(const Tensor& embeddings, std::span<const int> labels,
                          double margin) {
  if (margin < 0.0) throw std::invalid_argument("batch_hard_triplet: margin must be >= 0");
  check_triplet_batch(embeddings, labels);
  const std::size_t b = embeddings.dim(0), d = embeddings.dim(1);
  auto dist = distance_matrix(embeddings);
  auto sel = select(dist, b, labels);
  std::vector<char> active(b, 0);
  double loss = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    const double hinge =
        margin + dist[a * b + sel.positive[a]] - dist[a * b + sel.negative[a]];
    if (hinge > 0.0) {
      loss += hinge;
      active[a] = 1;
    }
  }
  loss /= static_cast<double>(b);
  return detail::make_result(
      "batch_hard_triplet", {}, {loss}, {embeddings},
      [b, d, dist = std::move(dist), sel = std::move(sel), active = std::move(active)](
          Node& self) {
        Node& p = self.parent(0);
        const double g = self.grad[0] / static_cast<double>(b);
        auto pull = [&](std::size_t a, std::size_t o, double w) {
          const double dd = dist[a * b + o];
          if (dd <= 0.0) return;
          for (std::size_t k = 0; k < d; ++k) {
            const double u = (p.value[a * d + k] - p.value[o * d + k]) / dd;
            p.grad[a * d + k] += w * u;
            p.grad[o * d + k] -= w * u;
          }
        };
        for (std::size_t a = 0; a < b; ++a) {
          if (!active[a]) continue;
          pull(a, sel.positive[a], g);
          pull(a, sel.negative[a], -g);
        }
      });
}

}  // namespace denseil
