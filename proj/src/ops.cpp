#include "denseil/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "denseil/kernels.hpp"

namespace denseil::ops {

using detail::make_result;
using detail::Node;

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

std::vector<double> copy_values(const Tensor& t) {
  auto v = t.values();
  return {v.begin(), v.end()};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = self.parent(k);
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  auto out = copy_values(a);
  for (auto& v : out) v *= s;
  return make_result("scale", a.shape(), std::move(out), {a}, [s](Node& self) {
    Node& p = self.parent(0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += s * self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (bias.numel() != m) throw ShapeError("add_bias: bias length mismatch");
  auto out = copy_values(x);
  auto bv = bias.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bv[j];
  }
  return make_result("add_bias", x.shape(), std::move(out), {x, bias},
                     [n, m](Node& self) {
                       Node& px = self.parent(0);
                       Node& pb = self.parent(1);
                       if (px.requires_grad) {
                         for (std::size_t i = 0; i < n * m; ++i) px.grad[i] += self.grad[i];
                       }
                       if (pb.requires_grad) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) pb.grad[j] += self.grad[i * m + j];
                         }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  auto out = copy_values(x);
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result("relu", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& p = self.parent(0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result("sum", {}, {s}, {x}, [](Node& self) {
    Node& p = self.parent(0);
    const double g = self.grad[0];
    for (auto& v : p.grad) v += g;
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw ShapeError("mean_rows: no rows");
  std::vector<double> out(d, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  return make_result("mean_rows", {d}, std::move(out), {x}, [n, d, inv](Node& self) {
    Node& p = self.parent(0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) p.grad[i * d + j] += inv * self.grad[j];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), copy_values(x), {x}, [](Node& self) {
    Node& p = self.parent(0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t d = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != d) throw ShapeError("concat_rows: width mismatch");
    offsets.push_back(rows * d);
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result("concat_rows", {rows, d}, std::move(out), {parts.begin(), parts.end()},
                     [offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         Node& p = self.parent(k);
                         if (!p.requires_grad) continue;
                         for (std::size_t i = 0; i < p.grad.size(); ++i) {
                           p.grad[i] += self.grad[offsets[k] + i];
                         }
                       }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts[0].dim(0);
  std::size_t width = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != n) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(width);
    widths.push_back(p.dim(1));
    width += p.dim(1);
  }
  std::vector<double> out(n * width);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(v.begin() + static_cast<long>(i * widths[k]), widths[k],
                  out.begin() + static_cast<long>(i * width + offsets[k]));
    }
  }
  return make_result("concat_cols", {n, width}, std::move(out), {parts.begin(), parts.end()},
                     [n, width, offsets, widths](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         Node& p = self.parent(k);
                         if (!p.requires_grad) continue;
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < widths[k]; ++j) {
                             p.grad[i * widths[k] + j] += self.grad[i * width + offsets[k] + j];
                           }
                         }
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t length) {
  require_rank(x, 2, "slice_cols");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (length == 0 || offset + length > d) throw ShapeError("slice_cols: invalid slice");
  std::vector<double> out(n * length);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < length; ++j) out[i * length + j] = xv[i * d + offset + j];
  }
  return make_result("slice_cols", {n, length}, std::move(out), {x},
                     [n, d, offset, length](Node& self) {
                       Node& p = self.parent(0);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < length; ++j) {
                           p.grad[i * d + offset + j] += self.grad[i * length + j];
                         }
                       }
                     });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t d = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.numel() != d) throw ShapeError("stack_rows: length mismatch");
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  return make_result("stack_rows", {rows.size(), d}, std::move(out), {rows.begin(), rows.end()},
                     [d](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         Node& p = self.parent(k);
                         if (!p.requires_grad) continue;
                         for (std::size_t j = 0; j < d; ++j) p.grad[j] += self.grad[k * d + j];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  kernels::gemm_nn(n, k, m, a.data(), b.data(), out.data());
  MacCounter::record(static_cast<std::uint64_t>(n) * k * m);
  return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    if (pa.requires_grad) {
      kernels::gemm_nt(n, m, k, self.grad.data(), pb.value.data(), pa.grad.data());
    }
    if (pb.requires_grad) {
      kernels::gemm_tn(k, n, m, pa.value.data(), self.grad.data(), pb.grad.data());
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) +
                     " * " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(n * m, 0.0);
  kernels::gemm_nt(n, k, m, a.data(), b.data(), out.data());
  MacCounter::record(static_cast<std::uint64_t>(n) * k * m);
  return make_result("matmul_nt", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    if (pa.requires_grad) {
      kernels::gemm_nn(n, m, k, self.grad.data(), pb.value.data(), pa.grad.data());
    }
    if (pb.requires_grad) {
      kernels::gemm_tn(m, n, k, self.grad.data(), pa.value.data(), pb.grad.data());
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias) {
  Tensor y = matmul(x, w);
  return bias ? add_bias(y, *bias) : y;
}

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
  return linear(relu(linear(x, w1, b1)), w2, b2);
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  detail::require_finite("softmax_rows", x.values());
  const std::size_t n = x.dim(0), m = x.dim(1);
  auto out = copy_values(x);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= s;
  }
  return make_result("softmax_rows", x.shape(), std::move(out), {x}, [n, m](Node& self) {
    Node& p = self.parent(0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = self.value.data() + i * m;
      const double* g = self.grad.data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) p.grad[i * m + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (d == 0) throw ShapeError("layer_norm: zero-width rows");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm: affine size");
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = self.parent(0);
        Node& pg = self.parent(1);
        Node& pb = self.parent(2);
        for (std::size_t i = 0; i < n; ++i) {
          const double* g = self.grad.data() + i * d;
          const double* xh = xhat.data() + i * d;
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[j] * pg.value[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
            if (pg.requires_grad) pg.grad[j] += g[j] * xh[j];
            if (pb.requires_grad) pb.grad[j] += g[j];
          }
          if (!px.requires_grad) continue;
          const double scale_i = inv_std[i] / static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[j] * pg.value[j];
            px.grad[i * d + j] += scale_i * (static_cast<double>(d) * dxh - sum_dxh -
                                             xh[j] * sum_dxh_xh);
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  const NormStats* fixed, NormStats* batch_stats) {
  if (x.rank() < 2) throw ShapeError("batch_norm: expected rank >= 2");
  if (!(eps > 0.0)) throw std::invalid_argument("batch_norm: eps must be positive");
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t spatial = x.numel() / (batch * channels);
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw ShapeError("batch_norm: affine size");
  }
  const double count = static_cast<double>(batch * spatial);
  auto xv = x.values();
  NormStats stats;
  if (fixed != nullptr) {
    if (fixed->mean.size() != channels || fixed->var.size() != channels) {
      throw ShapeError("batch_norm: statistics size");
    }
    stats = *fixed;
  } else {
    stats.mean.assign(channels, 0.0);
    stats.var.assign(channels, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* v = xv.data() + (b * channels + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) stats.mean[c] += v[s];
      }
    }
    for (auto& m : stats.mean) m /= count;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* v = xv.data() + (b * channels + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const double dv = v[s] - stats.mean[c];
          stats.var[c] += dv * dv;
        }
      }
    }
    for (auto& v : stats.var) v /= count;
  }
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(stats.var[c] + eps);

  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> xhat(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        xhat[base + s] = (xv[base + s] - stats.mean[c]) * inv_std[c];
        out[base + s] = gv[c] * xhat[base + s] + bv[c];
      }
    }
  }
  if (batch_stats != nullptr) *batch_stats = stats;
  const bool batch_mode = fixed == nullptr;
  return make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [batch, channels, spatial, count, batch_mode, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& self) {
        Node& px = self.parent(0);
        Node& pg = self.parent(1);
        Node& pb = self.parent(2);
        std::vector<double> sum_dxh(channels, 0.0), sum_dxh_xh(channels, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
              const double g = self.grad[base + s];
              const double dxh = g * pg.value[c];
              sum_dxh[c] += dxh;
              sum_dxh_xh[c] += dxh * xhat[base + s];
              if (pg.requires_grad) pg.grad[c] += g * xhat[base + s];
              if (pb.requires_grad) pb.grad[c] += g;
            }
          }
        }
        if (!px.requires_grad) return;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
              const double dxh = self.grad[base + s] * pg.value[c];
              if (batch_mode) {
                px.grad[base + s] += inv_std[c] / count *
                                     (count * dxh - sum_dxh[c] - xhat[base + s] * sum_dxh_xh[c]);
              } else {
                px.grad[base + s] += inv_std[c] * dxh;
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  kernels::ConvGeometry g;
  g.frames = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.stride = stride;
  if (g.height % stride != 0 || g.width % stride != 0) {
    throw ShapeError("conv2d: spatial size " + shape_str(x.shape()) +
                     " not divisible by stride");
  }
  if (w.dim(0) != g.in_channels || w.dim(1) != 3 || w.dim(2) != 3) {
    throw ShapeError("conv2d: kernel shape " + shape_str(w.shape()));
  }
  const std::size_t cout = w.dim(3);
  if (bias.numel() != cout) throw ShapeError("conv2d: bias length");
  const std::size_t rows = g.out_pixels(), ps = g.patch_size();
  const std::size_t oh = g.out_height(), ow = g.out_width(), plane = oh * ow;

  std::vector<double> cols(rows * ps);
  kernels::im2col(g, x.data(), cols.data());
  std::vector<double> nhwc(rows * cout, 0.0);
  kernels::gemm_nn(rows, ps, cout, cols.data(), w.data(), nhwc.data());

  std::vector<double> out(rows * cout);
  auto bv = bias.values();
  for (std::size_t f = 0; f < g.frames; ++f) {
    for (std::size_t px = 0; px < plane; ++px) {
      const double* src = nhwc.data() + (f * plane + px) * cout;
      for (std::size_t c = 0; c < cout; ++c) {
        out[(f * cout + c) * plane + px] = src[c] + bv[c];
      }
    }
  }
  return make_result(
      "conv2d", {g.frames, cout, oh, ow}, std::move(out), {x, w, bias},
      [g, cout, plane, rows, ps, cols = std::move(cols)](Node& self) {
        Node& px = self.parent(0);
        Node& pw = self.parent(1);
        Node& pb = self.parent(2);
        std::vector<double> dy(rows * cout);
        for (std::size_t f = 0; f < g.frames; ++f) {
          for (std::size_t c = 0; c < cout; ++c) {
            const double* src = self.grad.data() + (f * cout + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) dy[(f * plane + p) * cout + c] = src[p];
          }
        }
        if (pb.requires_grad) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cout; ++c) pb.grad[c] += dy[r * cout + c];
          }
        }
        if (pw.requires_grad) {
          kernels::gemm_tn(ps, rows, cout, cols.data(), dy.data(), pw.grad.data());
        }
        if (px.requires_grad) {
          std::vector<double> dcols(rows * ps, 0.0);
          kernels::gemm_nt(rows, cout, ps, dy.data(), pw.value.data(), dcols.data());
          kernels::col2im(g, dcols.data(), px.grad.data());
        }
      });
}

std::vector<std::size_t> band_heights(std::size_t height, std::size_t parts) {
  if (parts == 0) throw std::invalid_argument("band_heights: parts must be positive");
  if (parts > height) {
    throw std::invalid_argument("band_heights: " + std::to_string(parts) +
                                " parts exceed height " + std::to_string(height));
  }
  std::vector<std::size_t> h(parts, height / parts);
  for (std::size_t p = 0; p < height % parts; ++p) ++h[p];
  return h;
}

Tensor band_pool(const Tensor& x, std::size_t parts) {
  require_rank(x, 4, "band_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto heights = band_heights(h, parts);
  std::vector<std::size_t> starts(parts, 0);
  for (std::size_t p = 1; p < parts; ++p) starts[p] = starts[p - 1] + heights[p - 1];

  auto xv = x.values();
  std::vector<double> out(n * parts * c, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* plane = xv.data() + (f * c + ch) * h * w;
      for (std::size_t p = 0; p < parts; ++p) {
        double s = 0.0;
        for (std::size_t y = starts[p]; y < starts[p] + heights[p]; ++y) {
          for (std::size_t xx = 0; xx < w; ++xx) s += plane[y * w + xx];
        }
        out[(f * parts + p) * c + ch] = s / static_cast<double>(heights[p] * w);
      }
    }
  }
  return make_result("band_pool", {n * parts, c}, std::move(out), {x},
                     [n, c, h, w, parts, heights, starts](Node& self) {
                       Node& px = self.parent(0);
                       for (std::size_t f = 0; f < n; ++f) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           double* plane = px.grad.data() + (f * c + ch) * h * w;
                           for (std::size_t p = 0; p < parts; ++p) {
                             const double g = self.grad[(f * parts + p) * c + ch] /
                                              static_cast<double>(heights[p] * w);
                             for (std::size_t y = starts[p]; y < starts[p] + heights[p]; ++y) {
                               for (std::size_t xx = 0; xx < w; ++xx) plane[y * w + xx] += g;
                             }
                           }
                         }
                       }
                     });
}

}  // namespace denseil::ops
