#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace scvae {

// Dense row-major tensor of 64-bit reals with an optional gradient slot.
// grad is either empty (absent) or exactly data.size() long.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);             // shape [1 x n]
    static Tensor matrix(int64_t r, int64_t c, std::vector<double> values);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    int64_t cols() const;   // product of all dims after the first

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

    bool has_grad() const { return !grad.empty(); }
    void ensure_grad();     // allocate zeros if absent
    void clear_grad() { grad.clear(); }

    bool all_finite() const;
};

int64_t shape_numel(std::span<const int64_t> shape);
std::string shape_str(std::span<const int64_t> shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Copies the given rows (in index order) into a new [n x cols] tensor.
Tensor gather_rows(const Tensor& src, std::span<const int64_t> indices);

} // namespace scvae
