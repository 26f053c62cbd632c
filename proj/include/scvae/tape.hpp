#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scvae/tensor.hpp"

namespace scvae {

enum class Activation { tanh_fn, relu, sigmoid, identity };

Activation activation_from_string(const std::string& s);
const char* activation_name(Activation a);

// Handle into a Tape; default-constructed handles are untaped.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation tape. A Tape records one evaluation; build
// the graph forward, call backward(loss) once, then read gradients with
// grad(). Leaves reference caller-owned tensors (no copy), interior nodes
// own their values. Gradients live on the tape, never in the referenced
// tensors; accumulate_param_grads() pushes them out explicitly. One Tape
// must only be used from one thread; concurrent evaluations get their own.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // leaves (caller keeps the tensor alive for the life of the tape)
    Var constant_view(const Tensor& t);
    Var constant(Tensor t);                  // owning copy
    Var param(const Tensor& t);              // differentiable leaf

    // y[m x n] = x[m x k] . w[n x k]^T + b[n]
    Var affine(Var x, Var w, Var b);
    // y = x . w^T, no bias (frozen skip projections)
    Var linear(Var x, Var w);
    Var activation(Activation kind, Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double c);
    Var mul(Var a, Var b);
    Var square(Var a);
    Var clamp(Var a, double lo, double hi);

    // z = mu + exp(log_var / 2) * eps, elementwise
    Var reparameterize(Var mu, Var log_var, Var eps);

    // per-row Bernoulli log-likelihood of x under sigmoid(logits): [m x d] -> [m]
    Var bernoulli_loglik(Var logits, Var x);
    // per-row unit-variance Gaussian log-likelihood: [m x d] -> [m]
    Var gaussian_loglik(Var mean, Var x);
    // per-row KL( N(mu, exp(log_var)) || N(0, I) ): [m x s] -> [m]
    Var gaussian_kl(Var mu, Var log_var);

    Var row_sum(Var a);                      // [m x n] -> [m]
    Var sum(Var a);                          // -> scalar
    Var mean(Var a);                         // -> scalar (mean over all entries)

    // Populates gradients of every node the scalar loss depends on.
    void backward(Var loss);

    std::span<const double> data(Var v) const;
    std::span<const int64_t> shape(Var v) const;
    int64_t numel(Var v) const;
    Tensor to_tensor(Var v) const;

    // Gradient of the last backward() w.r.t. v; zeros if v was unreachable.
    std::span<const double> grad(Var v) const;

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<int64_t> shape;
        std::vector<double> storage;        // empty for view leaves
        const double* values = nullptr;
        int64_t n = 0;
        std::vector<double> grad;
        bool needs_grad = false;
        std::function<void(Tape&, const Node&)> backprop;
    };

    int32_t push(Node node);
    const Node& node(Var v) const;
    Node& node_mut(Var v) { return nodes_[check(v)]; }
    size_t check(Var v) const;
    std::vector<double>& grad_buf(int32_t id);
    Var make_like(std::span<const int64_t> shape, bool needs_grad);

    std::vector<Node> nodes_;
    bool backward_ran_ = false;
    mutable std::vector<double> zero_grad_;  // lazily sized scratch for grad() of unreached nodes
};

// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid_fn(double x);

} // namespace scvae
