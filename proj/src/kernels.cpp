#include "scvae/kernels.hpp"

namespace scvae::kernels {

namespace ref {

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (int64_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            ci[j] = acc;
        }
    }
}

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t p, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * p;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
        // accumulate rank-1 updates in t order; keeps the inner loop contiguous
        for (int64_t t = 0; t < p; ++t) {
            const double av = ai[t];
            const double* bt = b + t * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
    for (int64_t j = 0; j < n; ++j) {
        double* cj = c + j * k;
        for (int64_t t = 0; t < k; ++t) cj[t] = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            const double av = a[i * n + j];
            const double* bi = b + i * k;
            for (int64_t t = 0; t < k; ++t) cj[t] += av * bi[t];
        }
    }
}

void add_bias_rows(double* y, const double* bias, int64_t m, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* yi = y + i * n;
        for (int64_t j = 0; j < n; ++j) yi[j] += bias[j];
    }
}

void col_sum(const double* a, double* out, int64_t m, int64_t n) {
    for (int64_t j = 0; j < n; ++j) out[j] = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        for (int64_t j = 0; j < n; ++j) out[j] += ai[j];
    }
}

} // namespace ref

// Parallel versions. Each output row/column is owned by exactly one thread
// and computed with the same summation order as ref::, so results are
// bitwise-identical to the serial kernels. The if-clauses keep tiny
// problems (and per-sample batch-1 passes) out of the OpenMP runtime.

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m > 1 && m * n * k > 32768)
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (int64_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            ci[j] = acc;
        }
    }
}

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t p, int64_t n) {
#pragma omp parallel for schedule(static) if (m > 1 && m * n * p > 32768)
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * p;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (int64_t t = 0; t < p; ++t) {
            const double av = ai[t];
            const double* bt = b + t * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
#pragma omp parallel for schedule(static) if (n > 1 && m * n * k > 32768)
    for (int64_t j = 0; j < n; ++j) {
        double* cj = c + j * k;
        for (int64_t t = 0; t < k; ++t) cj[t] = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            const double av = a[i * n + j];
            const double* bi = b + i * k;
            for (int64_t t = 0; t < k; ++t) cj[t] += av * bi[t];
        }
    }
}

void add_bias_rows(double* y, const double* bias, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static) if (m > 1 && m * n > 65536)
    for (int64_t i = 0; i < m; ++i) {
        double* yi = y + i * n;
        for (int64_t j = 0; j < n; ++j) yi[j] += bias[j];
    }
}

void col_sum(const double* a, double* out, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 1 && m * n > 65536)
    for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < m; ++i) acc += a[i * n + j];
        out[j] = acc;
    }
}

} // namespace scvae::kernels
