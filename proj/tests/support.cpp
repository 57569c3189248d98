#include "support.hpp"

#include <cmath>
#include <limits>

#include "denseil/ops.hpp"

namespace denseil::testing {

Tensor random_tensor(Shape shape, CounterRng& rng, double scale, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor random_projection(const Tensor& y, CounterRng& rng) {
  Tensor r = random_tensor(y.shape(), rng, 1.0, false);
  return ops::sum(ops::mul(y, r));
}

double grad_rel_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs,
                      double h) {
  std::vector<Tensor> xs = inputs;
  for (auto& x : xs) x.zero_grad();
  backward(loss());
  std::vector<double> analytic, numeric;
  for (auto& x : xs) {
    auto g = x.grad();
    for (std::size_t i = 0; i < x.numel(); ++i) analytic.push_back(g.empty() ? 0.0 : g[i]);
  }
  NoGradGuard guard;
  for (auto& x : xs) {
    auto v = x.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss().item();
      v[i] = keep - h;
      const double down = loss().item();
      v[i] = keep;
      numeric.push_back((up - down) / (2.0 * h));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
}

Matrix to_matrix(const Tensor& t) {
  const std::size_t n = t.dim(0), m = t.dim(1);
  Matrix out(n, std::vector<double>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i][j] = t.values()[i * m + j];
  }
  return out;
}

Matrix layer_norm_oracle(const Matrix& x, std::span<const double> gamma,
                         std::span<const double> beta, double eps) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i].size());
    double mean = 0.0;
    for (double v : x[i]) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= d;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      out[i][j] = gamma[j] * (x[i][j] - mean) / std::sqrt(var + eps) + beta[j];
    }
  }
  return out;
}

namespace {

double weight(const Tensor& w, std::size_t r, std::size_t c) {
  return w.values()[r * w.dim(1) + c];
}

}  // namespace

Matrix attention_oracle(const Matrix& queries, const Matrix& kv, const AttentionParams& p,
                        int heads) {
  const std::size_t d = queries[0].size();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  Matrix out(queries.size(), std::vector<double>(d, 0.0));
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    std::vector<double> concat(d, 0.0);
    for (int hd = 0; hd < heads; ++hd) {
      const std::size_t off = static_cast<std::size_t>(hd) * dh;
      std::vector<double> qv(dh, 0.0);
      for (std::size_t c = 0; c < dh; ++c) {
        for (std::size_t j = 0; j < d; ++j) qv[c] += queries[qi][j] * weight(p.wq, j, off + c);
      }
      std::vector<double> scores(kv.size());
      for (std::size_t k = 0; k < kv.size(); ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          double kc = 0.0;
          for (std::size_t j = 0; j < d; ++j) kc += kv[k][j] * weight(p.wk, j, off + c);
          s += qv[c] * kc;
        }
        scores[k] = s / std::sqrt(static_cast<double>(dh));
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (double s : scores) mx = std::max(mx, s);
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::size_t k = 0; k < kv.size(); ++k) {
        const double a = scores[k] / z;
        for (std::size_t c = 0; c < dh; ++c) {
          double vc = 0.0;
          for (std::size_t j = 0; j < d; ++j) vc += kv[k][j] * weight(p.wv, j, off + c);
          concat[off + c] += a * vc;
        }
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t j = 0; j < d; ++j) out[qi][c] += concat[j] * weight(p.wo, j, c);
    }
  }
  return out;
}

Matrix self_attention_oracle(const Matrix& h, const AttentionParams& p, int heads, double eps) {
  const Matrix x = layer_norm_oracle(h, p.ln_gamma.values(), p.ln_beta.values(), eps);
  Matrix a = attention_oracle(x, x, p, heads);
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < h[i].size(); ++j) a[i][j] += h[i][j];
  }
  return a;
}

Matrix dense_attention_oracle(const Matrix& h, const std::vector<Matrix>& sources,
                              const DenseParams& p, Fusion fusion, int heads, double eps) {
  Matrix out = h;
  const std::size_t n = h.size(), d = h[0].size();
  if (fusion == Fusion::Summation) {
    for (const auto& s : sources) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[i][j] += s[i][j];
      }
    }
    return out;
  }
  const Matrix x = layer_norm_oracle(h, p.attn.ln_gamma.values(), p.attn.ln_beta.values(), eps);
  if (fusion == Fusion::Concatenation) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row;
      for (const auto& s : sources) row.insert(row.end(), s[i].begin(), s[i].end());
      row.insert(row.end(), x[i].begin(), x[i].end());
      for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t j = 0; j < row.size(); ++j) out[i][c] += row[j] * weight(p.w_cat, j, c);
      }
    }
    return out;
  }
  Matrix kv;
  for (const auto& s : sources) kv.insert(kv.end(), s.begin(), s.end());
  kv.insert(kv.end(), x.begin(), x.end());
  const Matrix a = attention_oracle(x, kv, p.attn, heads);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i][j] += a[i][j];
  }
  return out;
}

double sinusoid_oracle(int q, int j, int d) {
  const double angle = q / std::pow(10000.0, static_cast<double>(j) / d);
  return j % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

MetricOracle metric_oracle(const EvalTable& table, int max_rank) {
  MetricOracle out;
  out.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  const std::size_t ng = table.num_gallery();
  double ap_total = 0.0;
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    auto admissible = [&](std::size_t g) {
      return !(table.filter_same_camera && table.gallery_ids[g] == table.query_ids[q] &&
               table.gallery_cams[g] == table.query_cams[q]);
    };
    auto rank_of = [&](std::size_t g) {
      std::size_t r = 1;
      for (std::size_t o = 0; o < ng; ++o) {
        if (o == g || !admissible(o)) continue;
        const double dq = table.distance(q, o), dg = table.distance(q, g);
        if (dq < dg || (dq == dg && o < g)) ++r;
      }
      return r;
    };
    std::vector<std::size_t> hit_ranks;
    for (std::size_t r = 1; r <= ng; ++r) {
      for (std::size_t g = 0; g < ng; ++g) {
        if (admissible(g) && table.gallery_ids[g] == table.query_ids[q] && rank_of(g) == r) {
          hit_ranks.push_back(r);
        }
      }
    }
    if (hit_ranks.empty()) continue;
    ++out.valid;
    for (std::size_t k = 0; k < out.cmc.size(); ++k) {
      if (hit_ranks.front() <= k + 1) out.cmc[k] += 1.0;
    }
    double ap = 0.0;
    for (std::size_t i = 0; i < hit_ranks.size(); ++i) {
      ap += static_cast<double>(i + 1) / static_cast<double>(hit_ranks[i]);
    }
    ap_total += ap / static_cast<double>(hit_ranks.size());
  }
  if (out.valid > 0) {
    for (auto& c : out.cmc) c /= static_cast<double>(out.valid);
    out.map = ap_total / static_cast<double>(out.valid);
  }
  return out;
}

double triplet_oracle(const Tensor& embeddings, std::span<const int> labels, double margin) {
  const std::size_t b = embeddings.dim(0), d = embeddings.dim(1);
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = embeddings.values()[i * d + k] - embeddings.values()[j * d + k];
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    double worst = 0.0;
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        worst = std::max(worst, margin + dist(a, p) - dist(a, n));
      }
    }
    total += worst;
  }
  return total / static_cast<double>(b);
}

}  // namespace denseil::testing
