#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels. Every kernel has a serial reference and an OpenMP
// version. Work is split over output rows only, and each output element is
// reduced in the same fixed order on every path, so both versions produce
// bit-identical results for any thread count.

namespace denseil::kernels {

struct ConvGeometry {
  std::size_t frames = 0;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t stride = 1;  // kernel is 3x3, zero padding 1

  std::size_t out_height() const { return height / stride; }
  std::size_t out_width() const { return width / stride; }
  std::size_t patch_size() const { return in_channels * 9; }
  std::size_t out_pixels() const { return frames * out_height() * out_width(); }
};

namespace serial {

/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c);
/// out[cols x rows] = in[rows x cols]^T
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);
/// cols[out_pixels x patch_size], one row per output pixel, channel-major patch.
void im2col(const ConvGeometry& g, const double* x, double* cols);
/// dx[frames x C x H x W] += scatter of dcols.
void col2im(const ConvGeometry& g, const double* dcols, double* dx);

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c);
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);
void im2col(const ConvGeometry& g, const double* x, double* cols);
void col2im(const ConvGeometry& g, const double* dcols, double* dx);

}  // namespace omp

// Dispatching entry points used by the ops layer.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c);
/// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c);
/// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c);
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);
void im2col(const ConvGeometry& g, const double* x, double* cols);
void col2im(const ConvGeometry& g, const double* dcols, double* dx);

/// Number of worker threads the OpenMP path would use (1 without OpenMP).
int max_threads();

}  // namespace denseil::kernels
