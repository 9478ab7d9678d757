#include "flexpose/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace flexpose::reference {

double mmd2_naive(const metrics::SampleMatrix& x,
                  const metrics::SampleMatrix& y, double sigma) {
  if (x.n < 2 || y.n < 2)
    throw std::invalid_argument("unbiased MMD needs >= 2 samples");
  const int d = x.d;
  auto kernel = [&](const double* a, const double* b) {
    double sq = 0.0;
    for (int t = 0; t < d; ++t) sq += (a[t] - b[t]) * (a[t] - b[t]);
    return std::exp(-sq / (2.0 * sigma * sigma));
  };

  double sxx = 0.0;
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j)
      if (i != j) sxx += kernel(x.row(i), x.row(j));
  double syy = 0.0;
  for (int i = 0; i < y.n; ++i)
    for (int j = 0; j < y.n; ++j)
      if (i != j) syy += kernel(y.row(i), y.row(j));
  double sxy = 0.0;
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < y.n; ++j) sxy += kernel(x.row(i), y.row(j));

  return sxx / (static_cast<double>(x.n) * (x.n - 1)) +
         syy / (static_cast<double>(y.n) * (y.n - 1)) -
         2.0 * sxy / (static_cast<double>(x.n) * y.n);
}

void matmul_nn_naive(const double* a, const double* b, double* c, int m,
                     int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk)
        acc += a[static_cast<size_t>(i) * k + kk] *
               b[static_cast<size_t>(kk) * n + j];
      c[static_cast<size_t>(i) * n + j] = acc;
    }
}

void matmul_nt_naive(const double* a, const double* b, double* c, int m,
                     int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk)
        acc += a[static_cast<size_t>(i) * k + kk] *
               b[static_cast<size_t>(j) * k + kk];
      c[static_cast<size_t>(i) * n + j] = acc;
    }
}

void matmul_tn_naive(const double* a, const double* b, double* c, int m,
                     int k, int n) {
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i)
        acc += a[static_cast<size_t>(i) * k + kk] *
               b[static_cast<size_t>(i) * n + j];
      c[static_cast<size_t>(kk) * n + j] = acc;
    }
}

}  // namespace flexpose::reference
