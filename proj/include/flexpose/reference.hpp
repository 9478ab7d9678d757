#pragma once

#include "flexpose/metrics.hpp"

namespace flexpose::reference {

// Serial reference implementations. These are the oracles the optimized
// OpenMP paths are tested against; they stay deliberately naive and must
// not share code with the implementations they check.

// Literal O(n^2) double loop over ordered pairs of the unbiased estimator.
double mmd2_naive(const metrics::SampleMatrix& x,
                  const metrics::SampleMatrix& y, double sigma);

// Textbook triple loops, one output element at a time.
void matmul_nn_naive(const double* a, const double* b, double* c, int m,
                     int k, int n);
void matmul_nt_naive(const double* a, const double* b, double* c, int m,
                     int k, int n);
void matmul_tn_naive(const double* a, const double* b, double* c, int m,
                     int k, int n);

}  // namespace flexpose::reference
