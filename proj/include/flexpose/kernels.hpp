#pragma once

#include <cstdint>

namespace flexpose::kern {

// OpenMP matrix kernels. All of them pin the per-element summation order
// (the reduction index ascends sequentially), so results are bit-identical
// to the serial reference for any thread count. Parallelism is only over
// independent output elements.

// c[m,n] = a[m,k] * b[k,n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k,
               int n);

// c[m,n] = a[m,k] * b[n,k]^T   (dot products of rows)
void matmul_nt(const double* a, const double* b, double* c, int m, int k,
               int n);

// c[k,n] = a[m,k]^T * b[m,n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k,
               int n);

// True when every entry is finite; parallel scan, order-independent.
bool all_finite(const double* x, int64_t n);

}  // namespace flexpose::kern
