// Benchmark comparing the OpenMP kernels against the serial reference
// implementations. The kernels pin per-element summation order, so besides
// timing we assert the parallel results are bit-identical to the serial
// ones.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "flexpose/kernels.hpp"
#include "flexpose/metrics.hpp"
#include "flexpose/mmd.hpp"
#include "flexpose/reference.hpp"
#include "flexpose/rng.hpp"

using namespace flexpose;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// The matmul rows assert bitwise equality; the MMD row allows 1e-12 because
// the streaming combine groups row sums before the final reduction.
void report(const char* name, double serial, double parallel, double flops,
            bool exact) {
  std::printf("%-28s serial %8.3f ms   openmp %8.3f ms   speedup %5.2fx   "
              "%7.2f GF/s   match %s\n",
              name, serial * 1e3, parallel * 1e3, serial / parallel,
              flops / parallel * 1e-9, exact ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled\n");
#endif

  Rng rng(7);

  {  // generator head shape
    const int m = 128, k = 64, n = 13 * 32 * 32;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    std::vector<double> c0(static_cast<size_t>(m) * n), c1(c0.size());
    const double s = time_of([&] { reference::matmul_nn_naive(a.data(), b.data(), c0.data(), m, k, n); }, 3);
    const double p = time_of([&] { kern::matmul_nn(a.data(), b.data(), c1.data(), m, k, n); }, 3);
    report("matmul_nn 128x64x13312", s, p, 2.0 * m * k * n, bits_equal(c0, c1));
  }
  {  // backward: grad wrt input
    const int m = 128, k = 13 * 32 * 32, n = 64;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(n) * k);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    std::vector<double> c0(static_cast<size_t>(m) * n), c1(c0.size());
    const double s = time_of([&] { reference::matmul_nt_naive(a.data(), b.data(), c0.data(), m, k, n); }, 3);
    const double p = time_of([&] { kern::matmul_nt(a.data(), b.data(), c1.data(), m, k, n); }, 3);
    report("matmul_nt 128x13312x64", s, p, 2.0 * m * k * n, bits_equal(c0, c1));
  }
  {  // backward: grad wrt weights
    const int m = 128, k = 64, n = 13 * 32 * 32;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(m) * n);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    std::vector<double> c0(static_cast<size_t>(k) * n), c1(c0.size());
    const double s = time_of([&] { reference::matmul_tn_naive(a.data(), b.data(), c0.data(), m, k, n); }, 3);
    const double p = time_of([&] { kern::matmul_tn(a.data(), b.data(), c1.data(), m, k, n); }, 3);
    report("matmul_tn 128x64x13312", s, p, 2.0 * m * k * n, bits_equal(c0, c1));
  }
  {  // evaluation-sized MMD
    const int n = 2000, d = 26;
    metrics::SampleMatrix x(n, d), y(n, d);
    for (auto& v : x.data) v = rng.normal();
    for (auto& v : y.data) v = rng.normal();
    const double sigma = 1.3;
    double r0 = 0.0, r1 = 0.0;
    const double s = time_of([&] { r0 = reference::mmd2_naive(x, y, sigma); }, 2);
    const double p = time_of([&] {
      r1 = mmdcore::mmd2_unbiased(x.data.data(), n, y.data.data(), n, d, sigma);
    }, 2);
    // ~3 flops per dim per pair plus one exp
    const double flops = 3.0 * d * (2.0 * n * n);
    const bool close = std::abs(r0 - r1) <= 1e-12;
    report("mmd2 2000 vs 2000 (d=26)", s, p, flops, close);
  }
  return 0;
}
