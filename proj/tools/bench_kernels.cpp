// Benchmark comparing the serial reference kernels against the OpenMP
// versions on the matrix shapes the training loop actually runs, and
// verifying that both produce bitwise-identical output.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "scvae/kernels.hpp"
#include "scvae/rng.hpp"

using namespace scvae;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Case {
    const char* name;
    int64_t m, k, n;
};

} // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    const int reps = quick ? 2 : 20;

    // batch x in x out shapes from the training step (width-500 presets)
    // and the per-sample probe
    const Case cases[] = {
        {"input layer  (100x784 . 500x784^T)", 100, 784, 500},
        {"hidden layer (100x500 . 500x500^T)", 100, 500, 500},
        {"output layer (100x500 . 784x500^T)", 100, 500, 784},
        {"probe sample (1x500 . 500x500^T)", 1, 500, 500},
    };

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-40s %12s %12s %9s %s\n", "case", "serial ms", "omp ms", "speedup", "bitwise");
    bool all_equal = true;
    for (const auto& c : cases) {
        Rng rng(99);
        std::vector<double> a(static_cast<size_t>(c.m * c.k));
        std::vector<double> b(static_cast<size_t>(c.n * c.k));
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        std::vector<double> out_ref(static_cast<size_t>(c.m * c.n));
        std::vector<double> out_omp(out_ref.size());

        const double t_ref = time_ms([&] {
            kernels::ref::matmul_nt(a.data(), b.data(), out_ref.data(), c.m, c.k, c.n);
        }, reps);
        const double t_omp = time_ms([&] {
            kernels::matmul_nt(a.data(), b.data(), out_omp.data(), c.m, c.k, c.n);
        }, reps);
        const bool equal =
            std::memcmp(out_ref.data(), out_omp.data(), out_ref.size() * sizeof(double)) == 0;
        all_equal = all_equal && equal;
        std::printf("%-40s %12.3f %12.3f %8.2fx %s\n", c.name, t_ref, t_omp,
                    t_ref / t_omp, equal ? "yes" : "NO");
    }

    // backward kernels on the hidden-layer shape
    {
        Rng rng(5);
        const int64_t m = 100, n = 500, k = 500;
        std::vector<double> dy(static_cast<size_t>(m * n)), x(static_cast<size_t>(m * k));
        for (auto& v : dy) v = rng.uniform(-1, 1);
        for (auto& v : x) v = rng.uniform(-1, 1);
        std::vector<double> dw_ref(static_cast<size_t>(n * k)), dw_omp(dw_ref.size());
        const double t_ref = time_ms([&] {
            kernels::ref::matmul_tn(dy.data(), x.data(), dw_ref.data(), m, n, k);
        }, reps);
        const double t_omp = time_ms([&] {
            kernels::matmul_tn(dy.data(), x.data(), dw_omp.data(), m, n, k);
        }, reps);
        const bool equal =
            std::memcmp(dw_ref.data(), dw_omp.data(), dw_ref.size() * sizeof(double)) == 0;
        all_equal = all_equal && equal;
        std::printf("%-40s %12.3f %12.3f %8.2fx %s\n", "weight grad  (100x500^T . 100x500)",
                    t_ref, t_omp, t_ref / t_omp, equal ? "yes" : "NO");
    }

    if (!all_equal) {
        std::printf("FAIL: omp kernels diverged from the serial reference\n");
        return 1;
    }
    return 0;
}
