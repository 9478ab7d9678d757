#include "flexpose/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "flexpose/rng.hpp"

namespace flexpose::mmdcore {

namespace {

inline double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

// Sum over j != i (within) or all j (cross) of kernel values for row i.
// The skip is handled by splitting the range; the loop bodies stay
// branch-free so they vectorize.
double kernel_row_sum(const double* xi, const double* y, int ny, int d,
                      double inv_two_sigma_sq, int skip) {
  auto span_sum = [&](int lo, int hi) {
    double s = 0.0;
    for (int j = lo; j < hi; ++j)
      s += std::exp(-sq_dist(xi, y + static_cast<size_t>(j) * d, d) *
                    inv_two_sigma_sq);
    return s;
  };
  if (skip < 0) return span_sum(0, ny);
  return span_sum(0, skip) + span_sum(skip + 1, ny);
}

}  // namespace

double mmd2_unbiased(const double* x, int nx, const double* y, int ny, int d,
                     double sigma) {
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("unbiased MMD needs >= 2 samples");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  const double c = 1.0 / (2.0 * sigma * sigma);

  // The cross term is accumulated over the rows of a canonical side chosen
  // by content, not by argument position, so mmd2(X,Y) == mmd2(Y,X) bit for
  // bit (the within-set terms and the final commutative combine already
  // are).
  const double* cx = x;
  const double* cy = y;
  int cnx = nx, cny = ny;
  const bool swap_sides =
      nx > ny ||
      (nx == ny &&
       std::lexicographical_compare(y, y + static_cast<size_t>(ny) * d, x,
                                    x + static_cast<size_t>(nx) * d));
  if (swap_sides) {
    std::swap(cx, cy);
    std::swap(cnx, cny);
  }

  std::vector<double> xx(nx), yy(ny), xy(cnx);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < nx; ++i)
    xx[i] = kernel_row_sum(x + static_cast<size_t>(i) * d, x, nx, d, c, i);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < ny; ++i)
    yy[i] = kernel_row_sum(y + static_cast<size_t>(i) * d, y, ny, d, c, i);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cnx; ++i)
    xy[i] = kernel_row_sum(cx + static_cast<size_t>(i) * d, cy, cny, d, c, -1);

  // Sequential combine in row order.
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = 0; i < nx; ++i) sxx += xx[i];
  for (int i = 0; i < ny; ++i) syy += yy[i];
  for (int i = 0; i < cnx; ++i) sxy += xy[i];

  const double exx = sxx / (static_cast<double>(nx) * (nx - 1));
  const double eyy = syy / (static_cast<double>(ny) * (ny - 1));
  const double exy = sxy / (static_cast<double>(cnx) * cny);
  return exx + eyy - 2.0 * exy;
}

double median_bandwidth(const double* x, int nx, const double* y, int ny,
                        int d, int max_exact) {
  const int total = nx + ny;
  if (total < 2)
    throw std::invalid_argument("median bandwidth needs >= 2 pooled samples");

  // Gather (a subsample of) the pooled rows.
  std::vector<const double*> rows;
  if (total <= max_exact) {
    rows.reserve(total);
    for (int i = 0; i < nx; ++i) rows.push_back(x + static_cast<size_t>(i) * d);
    for (int i = 0; i < ny; ++i) rows.push_back(y + static_cast<size_t>(i) * d);
  } else {
    Rng rng(0x9d2c5680);  // fixed: the subsample must not depend on callers
    rows.reserve(max_exact);
    for (int i = 0; i < max_exact; ++i) {
      const uint64_t r = rng.uniform_index(total);
      rows.push_back(r < static_cast<uint64_t>(nx)
                         ? x + r * d
                         : y + (r - nx) * d);
    }
  }

  const int n = static_cast<int>(rows.size());
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dists.push_back(std::sqrt(sq_dist(rows[i], rows[j], d)));

  const size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    // Even count: average the two middle order statistics.
    const double hi = med;
    std::nth_element(dists.begin(), dists.begin() + (mid - 1), dists.end());
    med = 0.5 * (dists[mid - 1] + hi);
  }
  if (!(med > 0.0))
    throw std::invalid_argument("zero median distance: all points identical");
  return med / std::sqrt(2.0);
}

}  // namespace flexpose::mmdcore
