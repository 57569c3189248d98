#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "denseil/kernels.hpp"
#include "denseil/rng.hpp"

using namespace denseil;

namespace {

std::vector<double> random_vec(std::size_t n, CounterRng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double omp_ms, bool equal) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
              omp_ms, serial_ms / omp_ms, equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  CounterRng rng(42);
  std::printf("threads: %d\n", kernels::max_threads());

  for (std::size_t n : {64, 128, 256, 512}) {
    const auto a = random_vec(n * n, rng), b = random_vec(n * n, rng);
    std::vector<double> cs(n * n), co(n * n);
    const double s = best_ms(5, [&] {
      std::fill(cs.begin(), cs.end(), 0.0);
      kernels::serial::gemm_nn(n, n, n, a.data(), b.data(), cs.data());
    });
    const double o = best_ms(5, [&] {
      std::fill(co.begin(), co.end(), 0.0);
      kernels::omp::gemm_nn(n, n, n, a.data(), b.data(), co.data());
    });
    char name[64];
    std::snprintf(name, sizeof name, "gemm %zux%zux%zu", n, n, n);
    report(name, s, o, cs == co);
  }

  // Encoder-shaped im2col: 8 frames, 16 channels, 32x16.
  for (std::size_t channels : {16, 64}) {
    kernels::ConvGeometry g{8, channels, 32, 16, 1};
    const auto x = random_vec(g.frames * channels * g.height * g.width, rng);
    std::vector<double> cs(g.out_pixels() * g.patch_size());
    std::vector<double> co(cs.size());
    const double s = best_ms(10, [&] { kernels::serial::im2col(g, x.data(), cs.data()); });
    const double o = best_ms(10, [&] { kernels::omp::im2col(g, x.data(), co.data()); });
    char name[64];
    std::snprintf(name, sizeof name, "im2col 8x%zux32x16", channels);
    report(name, s, o, cs == co);
  }
  return 0;
}
