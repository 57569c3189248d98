#include "denseil/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef DENSEIL_HAVE_OPENMP
#include <omp.h>
#endif

namespace denseil::kernels {

namespace {

constexpr std::size_t kRowBlock = 16;
constexpr std::size_t kDepthBlock = 128;

// Rows [i0, i1) of c += a * b. For each c(i, j) the products are summed in
// ascending p regardless of how rows are distributed.
inline void gemm_rows(std::size_t i0, std::size_t i1, std::size_t k, std::size_t n,
                      const double* a, const double* b, double* c) {
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t p1 = std::min(k, p0 + kDepthBlock);
    for (std::size_t i = i0; i < i1; ++i) {
      double* __restrict crow = c + i * n;
      const double* arow = a + i * k;
      for (std::size_t p = p0; p < p1; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* __restrict brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

inline void transpose_rows(std::size_t r0, std::size_t r1, std::size_t cols,
                           std::size_t rows, const double* in, double* out) {
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

inline void im2col_frame(const ConvGeometry& g, std::size_t f, const double* x,
                         double* cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), ps = g.patch_size();
  const std::size_t plane = g.height * g.width;
  const double* xf = x + f * g.in_channels * plane;
  double* base = cols + f * oh * ow * ps;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* row = base + (oy * ow + ox) * ps;
      const long cy = static_cast<long>(oy * g.stride);
      const long cx = static_cast<long>(ox * g.stride);
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const double* xc = xf + c * plane;
        for (long ky = 0; ky < 3; ++ky) {
          const long y = cy + ky - 1;
          for (long kx = 0; kx < 3; ++kx) {
            const long xx = cx + kx - 1;
            const bool inside = y >= 0 && y < static_cast<long>(g.height) && xx >= 0 &&
                                xx < static_cast<long>(g.width);
            *row++ = inside ? xc[y * static_cast<long>(g.width) + xx] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im_frame(const ConvGeometry& g, std::size_t f, const double* dcols,
                         double* dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), ps = g.patch_size();
  const std::size_t plane = g.height * g.width;
  double* df = dx + f * g.in_channels * plane;
  const double* base = dcols + f * oh * ow * ps;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* row = base + (oy * ow + ox) * ps;
      const long cy = static_cast<long>(oy * g.stride);
      const long cx = static_cast<long>(ox * g.stride);
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        double* dc = df + c * plane;
        for (long ky = 0; ky < 3; ++ky) {
          const long y = cy + ky - 1;
          for (long kx = 0; kx < 3; ++kx) {
            const long xx = cx + kx - 1;
            const double v = *row++;
            if (y >= 0 && y < static_cast<long>(g.height) && xx >= 0 &&
                xx < static_cast<long>(g.width)) {
              dc[y * static_cast<long>(g.width) + xx] += v;
            }
          }
        }
      }
    }
  }
}

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelMacs = 1u << 16;

}  // namespace

namespace serial {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    gemm_rows(i0, std::min(m, i0 + kRowBlock), k, n, a, b, c);
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  transpose_rows(0, rows, cols, rows, in, out);
}

void im2col(const ConvGeometry& g, const double* x, double* cols) {
  for (std::size_t f = 0; f < g.frames; ++f) im2col_frame(g, f, x, cols);
}

void col2im(const ConvGeometry& g, const double* dcols, double* dx) {
  for (std::size_t f = 0; f < g.frames; ++f) col2im_frame(g, f, dcols, dx);
}

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  const long blocks = static_cast<long>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
  for (long bi = 0; bi < blocks; ++bi) {
    const std::size_t i0 = static_cast<std::size_t>(bi) * kRowBlock;
    gemm_rows(i0, std::min(m, i0 + kRowBlock), k, n, a, b, c);
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
#pragma omp parallel for schedule(static)
  for (long r = 0; r < static_cast<long>(rows); ++r) {
    transpose_rows(static_cast<std::size_t>(r), static_cast<std::size_t>(r) + 1, cols,
                   rows, in, out);
  }
}

void im2col(const ConvGeometry& g, const double* x, double* cols) {
#pragma omp parallel for schedule(static)
  for (long f = 0; f < static_cast<long>(g.frames); ++f) {
    im2col_frame(g, static_cast<std::size_t>(f), x, cols);
  }
}

void col2im(const ConvGeometry& g, const double* dcols, double* dx) {
#pragma omp parallel for schedule(static)
  for (long f = 0; f < static_cast<long>(g.frames); ++f) {
    col2im_frame(g, static_cast<std::size_t>(f), dcols, dx);
  }
}

}  // namespace omp

int max_threads() {
#ifdef DENSEIL_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  if (max_threads() > 1 && m * k * n >= kParallelMacs && m > kRowBlock) {
    omp::gemm_nn(m, k, n, a, b, c);
  } else {
    serial::gemm_nn(m, k, n, a, b, c);
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  std::vector<double> bt(k * n);
  transpose(n, k, b, bt.data());
  gemm_nn(m, k, n, a, bt.data(), c);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  std::vector<double> at(m * k);
  transpose(k, m, a, at.data());
  gemm_nn(m, k, n, at.data(), b, c);
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  if (max_threads() > 1 && rows * cols >= kParallelMacs) {
    omp::transpose(rows, cols, in, out);
  } else {
    serial::transpose(rows, cols, in, out);
  }
}

void im2col(const ConvGeometry& g, const double* x, double* cols) {
  if (max_threads() > 1 && g.frames > 1) {
    omp::im2col(g, x, cols);
  } else {
    serial::im2col(g, x, cols);
  }
}

void col2im(const ConvGeometry& g, const double* dcols, double* dx) {
  if (max_threads() > 1 && g.frames > 1) {
    omp::col2im(g, dcols, dx);
  } else {
    serial::col2im(g, dcols, dx);
  }
}

}  // namespace denseil::kernels
