#include "flexpose/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flexpose::kern {

namespace {

constexpr int kPanel = 512;  // output columns per task

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k,
               int n) {
  const int npanels = (n + kPanel - 1) / kPanel;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < npanels; ++p) {
    const int j0 = p * kPanel;
    const int j1 = std::min(n, j0 + kPanel);
    // axpy panels: each C element accumulates over ascending k, and the
    // B panel stays cache-resident across the i loop.
    for (int i = 0; i < m; ++i) {
      double* crow = c + static_cast<size_t>(i) * n;
      std::fill(crow + j0, crow + j1, 0.0);
      const double* arow = a + static_cast<size_t>(i) * k;
      for (int kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = b + static_cast<size_t>(kk) * n;
        for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k,
               int n) {
  // Eight B rows at a time, packed interleaved so the inner loop reads
  // contiguously. Each C element is still a plain ascending-k dot product.
  const int jblocks = (n + 7) / 8;
#pragma omp parallel
  {
    std::vector<double> pack;
#pragma omp for schedule(static)
    for (int jb = 0; jb < jblocks; ++jb) {
      const int j0 = jb * 8;
      const int jw = std::min(8, n - j0);
      pack.resize(static_cast<size_t>(k) * jw);
      for (int kk = 0; kk < k; ++kk)
        for (int q = 0; q < jw; ++q)
          pack[static_cast<size_t>(kk) * jw + q] =
              b[static_cast<size_t>(j0 + q) * k + kk];
      // 8x8 register tile: eight A rows share the packed panel sweep. The
      // independent per-row accumulator chains hide the add latency that a
      // strict (non-reassociated) reduction otherwise serializes on, while
      // each element still sums in flat ascending-k order.
      int i = 0;
      if (jw == 8) {
        for (; i + 8 <= m; i += 8) {
          const double* ar[8];
          for (int t = 0; t < 8; ++t)
            ar[t] = a + static_cast<size_t>(i + t) * k;
          double acc[8][8] = {};
          const double* pk = pack.data();
          for (int kk = 0; kk < k; ++kk, pk += 8) {
            for (int t = 0; t < 8; ++t) {
              const double v = ar[t][kk];
              for (int q = 0; q < 8; ++q) acc[t][q] += v * pk[q];
            }
          }
          for (int t = 0; t < 8; ++t)
            for (int q = 0; q < 8; ++q)
              c[static_cast<size_t>(i + t) * n + j0 + q] = acc[t][q];
        }
      }
      for (; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double acc[8] = {};
        for (int kk = 0; kk < k; ++kk) {
          const double av = arow[kk];
          for (int q = 0; q < jw; ++q)
            acc[q] += av * pack[static_cast<size_t>(kk) * jw + q];
        }
        for (int q = 0; q < jw; ++q) c[static_cast<size_t>(i) * n + j0 + q] = acc[q];
      }
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k,
               int n) {
  const int npanels = (n + kPanel - 1) / kPanel;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < npanels; ++p) {
    const int j0 = p * kPanel;
    const int j1 = std::min(n, j0 + kPanel);
    for (int kk = 0; kk < k; ++kk)
      std::fill(c + static_cast<size_t>(kk) * n + j0,
                c + static_cast<size_t>(kk) * n + j1, 0.0);
    // i outermost: every C element accumulates over rows of A in order.
    for (int i = 0; i < m; ++i) {
      const double* brow = b + static_cast<size_t>(i) * n;
      const double* acol = a + static_cast<size_t>(i) * k;
      for (int kk = 0; kk < k; ++kk) {
        const double av = acol[kk];
        double* crow = c + static_cast<size_t>(kk) * n;
        for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

bool all_finite(const double* x, int64_t n) {
  bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
  for (int64_t i = 0; i < n; ++i) ok = ok && std::isfinite(x[i]);
  return ok;
}

}  // namespace flexpose::kern
