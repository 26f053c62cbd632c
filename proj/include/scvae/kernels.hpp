#pragma once

#include <cstdint>

namespace scvae::kernels {

// Dense kernels behind the tape ops. Each has a serial reference version
// under ref:: and an OpenMP version that partitions work over independent
// output elements with the same per-element summation order, so the two
// produce bitwise-identical results for any thread count.

namespace ref {

// c[m x n] = a[m x k] . b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// c[m x n] = a[m x p] . b[p x n]
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t p, int64_t n);

// c[n x k] = a[m x n]^T . b[m x k]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k);

// y[i,:] += bias for every row
void add_bias_rows(double* y, const double* bias, int64_t m, int64_t n);

// out[j] = sum_i a[i,j]
void col_sum(const double* a, double* out, int64_t m, int64_t n);

} // namespace ref

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t p, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k);
void add_bias_rows(double* y, const double* bias, int64_t m, int64_t n);
void col_sum(const double* a, double* out, int64_t m, int64_t n);

} // namespace scvae::kernels
