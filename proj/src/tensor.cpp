#include "scvae/tensor.hpp"

#include <cmath>
#include <sstream>

#include "scvae/errors.hpp"

namespace scvae {

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw usage_error("tensor: shape " + shape_str(shape) + " does not match " +
                          std::to_string(data.size()) + " elements");
    }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    const int64_t n = shape_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(n), 0.0);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t;
    t.shape = {1, static_cast<int64_t>(values.size())};
    t.data = std::move(values);
    return t;
}

Tensor Tensor::matrix(int64_t r, int64_t c, std::vector<double> values) {
    return Tensor({r, c}, std::move(values));
}

int64_t Tensor::cols() const {
    if (shape.size() <= 1) return shape.empty() ? 1 : 1;
    int64_t c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

int64_t shape_numel(std::span<const int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw usage_error("tensor: non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(std::span<const int64_t> shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape;
}

Tensor gather_rows(const Tensor& src, std::span<const int64_t> indices) {
    const int64_t c = src.cols();
    Tensor out = Tensor::zeros({static_cast<int64_t>(indices.size()), c});
    for (size_t i = 0; i < indices.size(); ++i) {
        const int64_t r = indices[i];
        if (r < 0 || r >= src.rows()) throw usage_error("gather_rows: row index out of range");
        const double* s = src.data.data() + r * c;
        double* d = out.data.data() + static_cast<int64_t>(i) * c;
        for (int64_t j = 0; j < c; ++j) d[j] = s[j];
    }
    return out;
}

} // namespace scvae
