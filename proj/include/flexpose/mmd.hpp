#pragma once

#include <cstdint>

namespace flexpose::mmdcore {

// Unbiased MMD^2 with RBF kernel k(a,b) = exp(-|a-b|^2 / (2 sigma^2)):
//   mean_{i!=j} k(x_i,x_j) + mean_{i!=j} k(y_i,y_j) - 2 mean_{i,j} k(x_i,y_j).
// May be slightly negative; reported as-is. Row sums are computed in
// parallel with a fixed sequential combine, so the value is thread-count
// independent. Requires nx >= 2 and ny >= 2.
double mmd2_unbiased(const double* x, int nx, const double* y, int ny, int d,
                     double sigma);

// Median of pairwise Euclidean distances over the pooled rows of X and Y,
// divided by sqrt(2) so the kernel value at the median distance is exp(-1).
// Exact for pooled sizes <= max_exact (default 2000); above that a fixed
// seeded subsample of 2000 rows is used. Throws when the median is zero.
double median_bandwidth(const double* x, int nx, const double* y, int ny,
                        int d, int max_exact = 2000);

}  // namespace flexpose::mmdcore
