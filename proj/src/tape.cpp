#include "scvae/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "scvae/errors.hpp"
#include "scvae/kernels.hpp"

namespace scvae {

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid_fn(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw config_error("unknown activation '" + s + "' (expected tanh|relu|sigmoid|identity)");
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::tanh_fn: return "tanh";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "?";
}

size_t Tape::check(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) {
        throw usage_error("tape: handle does not refer to a taped value");
    }
    return static_cast<size_t>(v.id);
}

const Tape::Node& Tape::node(Var v) const { return nodes_[check(v)]; }

int32_t Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<int32_t>(nodes_.size() - 1);
}

// Creating a node may reallocate nodes_ and invalidate Node references, so
// every op below copies the input pointers and dims it needs up front.
// The value buffers themselves (leaf tensors, node storage vectors) are
// stable across reallocation.
Var Tape::make_like(std::span<const int64_t> shape, bool needs_grad) {
    Node n;
    n.shape.assign(shape.begin(), shape.end());
    n.n = shape_numel(n.shape);
    n.storage.assign(static_cast<size_t>(n.n), 0.0);
    n.values = n.storage.data();
    n.needs_grad = needs_grad;
    return Var{push(std::move(n))};
}

std::vector<double>& Tape::grad_buf(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() != static_cast<size_t>(n.n)) n.grad.assign(static_cast<size_t>(n.n), 0.0);
    return n.grad;
}

Var Tape::constant_view(const Tensor& t) {
    Node n;
    n.shape = t.shape;
    n.n = t.numel();
    n.values = t.data.data();
    return Var{push(std::move(n))};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.shape = t.shape;
    n.n = t.numel();
    n.storage = std::move(t.data);
    n.values = n.storage.data();
    return Var{push(std::move(n))};
}

Var Tape::param(const Tensor& t) {
    Node n;
    n.shape = t.shape;
    n.n = t.numel();
    n.values = t.data.data();
    n.needs_grad = true;
    return Var{push(std::move(n))};
}

Var Tape::affine(Var xv, Var wv, Var bv) {
    const Node& x = node(xv);
    const Node& w = node(wv);
    const Node& b = node(bv);
    if (x.shape.size() != 2 || w.shape.size() != 2 || b.shape.size() != 1 ||
        x.shape[1] != w.shape[1] || b.shape[0] != w.shape[0]) {
        throw config_error("affine: inconsistent shapes x=" + shape_str(x.shape) +
                           " w=" + shape_str(w.shape) + " b=" + shape_str(b.shape));
    }
    const int64_t m = x.shape[0], k = x.shape[1], n = w.shape[0];
    const double* xd = x.values;
    const double* wd = w.values;
    const double* bd = b.values;
    const bool needs = x.needs_grad || w.needs_grad || b.needs_grad;

    Var out = make_like(std::array<int64_t, 2>{m, n}, needs);
    Node& o = nodes_.back();
    kernels::matmul_nt(xd, wd, o.storage.data(), m, k, n);
    kernels::add_bias_rows(o.storage.data(), bd, m, n);
    const int32_t xi = xv.id, wi = wv.id, bi = bv.id;
    o.backprop = [xi, wi, bi, m, k, n](Tape& tp, const Node& self) {
        const double* dy = self.grad.data();
        if (tp.nodes_[static_cast<size_t>(xi)].needs_grad) {
            std::vector<double> dx(static_cast<size_t>(m * k));
            kernels::matmul_nn(dy, tp.nodes_[static_cast<size_t>(wi)].values, dx.data(), m, n, k);
            auto& g = tp.grad_buf(xi);
            for (size_t i = 0; i < dx.size(); ++i) g[i] += dx[i];
        }
        if (tp.nodes_[static_cast<size_t>(wi)].needs_grad) {
            std::vector<double> dw(static_cast<size_t>(n * k));
            kernels::matmul_tn(dy, tp.nodes_[static_cast<size_t>(xi)].values, dw.data(), m, n, k);
            auto& g = tp.grad_buf(wi);
            for (size_t i = 0; i < dw.size(); ++i) g[i] += dw[i];
        }
        if (tp.nodes_[static_cast<size_t>(bi)].needs_grad) {
            std::vector<double> db(static_cast<size_t>(n));
            kernels::col_sum(dy, db.data(), m, n);
            auto& g = tp.grad_buf(bi);
            for (size_t i = 0; i < db.size(); ++i) g[i] += db[i];
        }
    };
    return out;
}

Var Tape::linear(Var xv, Var wv) {
    const Node& x = node(xv);
    const Node& w = node(wv);
    if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[1]) {
        throw config_error("linear: inconsistent shapes x=" + shape_str(x.shape) +
                           " w=" + shape_str(w.shape));
    }
    const int64_t m = x.shape[0], k = x.shape[1], n = w.shape[0];
    const double* xd = x.values;
    const double* wd = w.values;
    const bool needs = x.needs_grad || w.needs_grad;

    Var out = make_like(std::array<int64_t, 2>{m, n}, needs);
    Node& o = nodes_.back();
    kernels::matmul_nt(xd, wd, o.storage.data(), m, k, n);
    const int32_t xi = xv.id, wi = wv.id;
    o.backprop = [xi, wi, m, k, n](Tape& tp, const Node& self) {
        const double* dy = self.grad.data();
        if (tp.nodes_[static_cast<size_t>(xi)].needs_grad) {
            std::vector<double> dx(static_cast<size_t>(m * k));
            kernels::matmul_nn(dy, tp.nodes_[static_cast<size_t>(wi)].values, dx.data(), m, n, k);
            auto& g = tp.grad_buf(xi);
            for (size_t i = 0; i < dx.size(); ++i) g[i] += dx[i];
        }
        if (tp.nodes_[static_cast<size_t>(wi)].needs_grad) {
            std::vector<double> dw(static_cast<size_t>(n * k));
            kernels::matmul_tn(dy, tp.nodes_[static_cast<size_t>(xi)].values, dw.data(), m, n, k);
            auto& g = tp.grad_buf(wi);
            for (size_t i = 0; i < dw.size(); ++i) g[i] += dw[i];
        }
    };
    return out;
}

Var Tape::activation(Activation kind, Var xv) {
    const Node& x = node(xv);
    const int64_t count = x.n;
    const double* xd = x.values;
    for (int64_t i = 0; i < count; ++i) {
        if (!std::isfinite(xd[i])) {
            throw numeric_error("activation: non-finite input at flat index " + std::to_string(i));
        }
    }
    const bool needs = x.needs_grad;
    const std::vector<int64_t> shape = x.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    switch (kind) {
        case Activation::tanh_fn:
            for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = std::tanh(xd[i]);
            break;
        case Activation::relu:
            for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = xd[i] > 0.0 ? xd[i] : 0.0;
            break;
        case Activation::sigmoid:
            for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = sigmoid_fn(xd[i]);
            break;
        case Activation::identity:
            for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = xd[i];
            break;
    }
    const int32_t xi = xv.id;
    o.backprop = [xi, kind](Tape& tp, const Node& self) {
        Node& xn = tp.nodes_[static_cast<size_t>(xi)];
        if (!xn.needs_grad) return;
        auto& g = tp.grad_buf(xi);
        const double* dy = self.grad.data();
        const double* y = self.values;
        const double* xvals = xn.values;
        switch (kind) {
            case Activation::tanh_fn:
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * (1.0 - y[i] * y[i]);
                break;
            case Activation::relu:
                for (size_t i = 0; i < g.size(); ++i) g[i] += xvals[i] > 0.0 ? dy[i] : 0.0;
                break;
            case Activation::sigmoid:
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * y[i] * (1.0 - y[i]);
                break;
            case Activation::identity:
                for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
                break;
        }
    };
    return out;
}

namespace {

void check_same_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                      const char* op) {
    if (a != b) {
        throw config_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                           shape_str(b));
    }
}

} // namespace

Var Tape::add(Var av, Var bv) {
    const Node& a = node(av);
    const Node& b = node(bv);
    check_same_shape(a.shape, b.shape, "add");
    const int64_t count = a.n;
    const double* ad = a.values;
    const double* bd = b.values;
    const bool needs = a.needs_grad || b.needs_grad;
    const std::vector<int64_t> shape = a.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = ad[i] + bd[i];
    const int32_t ai = av.id, bi = bv.id;
    o.backprop = [ai, bi](Tape& tp, const Node& self) {
        const double* dy = self.grad.data();
        if (tp.nodes_[static_cast<size_t>(ai)].needs_grad) {
            auto& g = tp.grad_buf(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
        if (tp.nodes_[static_cast<size_t>(bi)].needs_grad) {
            auto& g = tp.grad_buf(bi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
    };
    return out;
}

Var Tape::sub(Var av, Var bv) {
    const Node& a = node(av);
    const Node& b = node(bv);
    check_same_shape(a.shape, b.shape, "sub");
    const int64_t count = a.n;
    const double* ad = a.values;
    const double* bd = b.values;
    const bool needs = a.needs_grad || b.needs_grad;
    const std::vector<int64_t> shape = a.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = ad[i] - bd[i];
    const int32_t ai = av.id, bi = bv.id;
    o.backprop = [ai, bi](Tape& tp, const Node& self) {
        const double* dy = self.grad.data();
        if (tp.nodes_[static_cast<size_t>(ai)].needs_grad) {
            auto& g = tp.grad_buf(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
        if (tp.nodes_[static_cast<size_t>(bi)].needs_grad) {
            auto& g = tp.grad_buf(bi);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= dy[i];
        }
    };
    return out;
}

Var Tape::scale(Var av, double c) {
    const Node& a = node(av);
    const int64_t count = a.n;
    const double* ad = a.values;
    const bool needs = a.needs_grad;
    const std::vector<int64_t> shape = a.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = c * ad[i];
    const int32_t ai = av.id;
    o.backprop = [ai, c](Tape& tp, const Node& self) {
        if (!tp.nodes_[static_cast<size_t>(ai)].needs_grad) return;
        auto& g = tp.grad_buf(ai);
        const double* dy = self.grad.data();
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * dy[i];
    };
    return out;
}

Var Tape::mul(Var av, Var bv) {
    const Node& a = node(av);
    const Node& b = node(bv);
    check_same_shape(a.shape, b.shape, "mul");
    const int64_t count = a.n;
    const double* ad = a.values;
    const double* bd = b.values;
    const bool needs = a.needs_grad || b.needs_grad;
    const std::vector<int64_t> shape = a.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = ad[i] * bd[i];
    const int32_t ai = av.id, bi = bv.id;
    o.backprop = [ai, bi](Tape& tp, const Node& self) {
        const double* dy = self.grad.data();
        Node& an = tp.nodes_[static_cast<size_t>(ai)];
        Node& bn = tp.nodes_[static_cast<size_t>(bi)];
        if (an.needs_grad) {
            auto& g = tp.grad_buf(ai);
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bn.values[i];
        }
        if (bn.needs_grad) {
            auto& g = tp.grad_buf(bi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * an.values[i];
        }
    };
    return out;
}

Var Tape::square(Var av) {
    const Node& a = node(av);
    const int64_t count = a.n;
    const double* ad = a.values;
    const bool needs = a.needs_grad;
    const std::vector<int64_t> shape = a.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) o.storage[static_cast<size_t>(i)] = ad[i] * ad[i];
    const int32_t ai = av.id;
    o.backprop = [ai](Tape& tp, const Node& self) {
        Node& an = tp.nodes_[static_cast<size_t>(ai)];
        if (!an.needs_grad) return;
        auto& g = tp.grad_buf(ai);
        const double* dy = self.grad.data();
        for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * an.values[i] * dy[i];
    };
    return out;
}

Var Tape::clamp(Var av, double lo, double hi) {
    const Node& a = node(av);
    const int64_t count = a.n;
    const double* ad = a.values;
    const bool needs = a.needs_grad;
    const std::vector<int64_t> shape = a.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) {
        o.storage[static_cast<size_t>(i)] = std::min(std::max(ad[i], lo), hi);
    }
    const int32_t ai = av.id;
    o.backprop = [ai, lo, hi](Tape& tp, const Node& self) {
        Node& an = tp.nodes_[static_cast<size_t>(ai)];
        if (!an.needs_grad) return;
        auto& g = tp.grad_buf(ai);
        const double* dy = self.grad.data();
        for (size_t i = 0; i < g.size(); ++i) {
            if (an.values[i] > lo && an.values[i] < hi) g[i] += dy[i];
        }
    };
    return out;
}

Var Tape::reparameterize(Var muv, Var lvv, Var epsv) {
    const Node& mu = node(muv);
    const Node& lv = node(lvv);
    const Node& eps = node(epsv);
    if (mu.shape != lv.shape || mu.shape != eps.shape) {
        throw config_error("reparameterize: shape mismatch mu=" + shape_str(mu.shape) +
                           " log_var=" + shape_str(lv.shape) + " eps=" + shape_str(eps.shape));
    }
    const int64_t count = mu.n;
    const double* mud = mu.values;
    const double* lvd = lv.values;
    const double* epsd = eps.values;
    const bool needs = mu.needs_grad || lv.needs_grad;
    const std::vector<int64_t> shape = mu.shape;

    Var out = make_like(shape, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < count; ++i) {
        o.storage[static_cast<size_t>(i)] = mud[i] + std::exp(0.5 * lvd[i]) * epsd[i];
    }
    const int32_t mi = muv.id, li = lvv.id, ei = epsv.id;
    o.backprop = [mi, li, ei](Tape& tp, const Node& self) {
        const double* dy = self.grad.data();
        Node& mn = tp.nodes_[static_cast<size_t>(mi)];
        Node& ln = tp.nodes_[static_cast<size_t>(li)];
        const Node& en = tp.nodes_[static_cast<size_t>(ei)];
        if (mn.needs_grad) {
            auto& g = tp.grad_buf(mi);
            for (size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
        if (ln.needs_grad) {
            auto& g = tp.grad_buf(li);
            for (size_t i = 0; i < g.size(); ++i) {
                g[i] += dy[i] * 0.5 * std::exp(0.5 * ln.values[i]) * en.values[i];
            }
        }
    };
    return out;
}

Var Tape::bernoulli_loglik(Var logitv, Var xv) {
    const Node& y = node(logitv);
    const Node& x = node(xv);
    if (y.shape != x.shape || y.shape.size() != 2) {
        throw config_error("bernoulli_loglik: shape mismatch logits=" + shape_str(y.shape) +
                           " x=" + shape_str(x.shape));
    }
    const int64_t m = y.shape[0], d = y.shape[1];
    const double* yd = y.values;
    const double* xd = x.values;
    const bool needs = y.needs_grad;

    Var out = make_like(std::array<int64_t, 1>{m}, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* yi = yd + i * d;
        const double* xi = xd + i * d;
        for (int64_t j = 0; j < d; ++j) acc += xi[j] * yi[j] - softplus(yi[j]);
        o.storage[static_cast<size_t>(i)] = acc;
    }
    const int32_t yi_id = logitv.id, xi_id = xv.id;
    o.backprop = [yi_id, xi_id, m, d](Tape& tp, const Node& self) {
        Node& yn = tp.nodes_[static_cast<size_t>(yi_id)];
        const Node& xn = tp.nodes_[static_cast<size_t>(xi_id)];
        if (!yn.needs_grad) return;
        auto& g = tp.grad_buf(yi_id);
        const double* dy = self.grad.data();
        for (int64_t i = 0; i < m; ++i) {
            const double di = dy[i];
            const double* yv = yn.values + i * d;
            const double* xv2 = xn.values + i * d;
            double* gi = g.data() + i * d;
            for (int64_t j = 0; j < d; ++j) gi[j] += di * (xv2[j] - sigmoid_fn(yv[j]));
        }
    };
    return out;
}

Var Tape::gaussian_loglik(Var meanv, Var xv) {
    const Node& mu = node(meanv);
    const Node& x = node(xv);
    if (mu.shape != x.shape || mu.shape.size() != 2) {
        throw config_error("gaussian_loglik: shape mismatch mean=" + shape_str(mu.shape) +
                           " x=" + shape_str(x.shape));
    }
    const int64_t m = mu.shape[0], d = mu.shape[1];
    const double* mud = mu.values;
    const double* xd = x.values;
    const bool needs = mu.needs_grad;
    const double log2pi = 1.8378770664093454835606594728112;

    Var out = make_like(std::array<int64_t, 1>{m}, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < m; ++i) {
        double acc = -0.5 * static_cast<double>(d) * log2pi;
        const double* mi = mud + i * d;
        const double* xi = xd + i * d;
        for (int64_t j = 0; j < d; ++j) {
            const double r = xi[j] - mi[j];
            acc -= 0.5 * r * r;
        }
        o.storage[static_cast<size_t>(i)] = acc;
    }
    const int32_t mi_id = meanv.id, xi_id = xv.id;
    o.backprop = [mi_id, xi_id, m, d](Tape& tp, const Node& self) {
        Node& mn = tp.nodes_[static_cast<size_t>(mi_id)];
        const Node& xn = tp.nodes_[static_cast<size_t>(xi_id)];
        if (!mn.needs_grad) return;
        auto& g = tp.grad_buf(mi_id);
        const double* dy = self.grad.data();
        for (int64_t i = 0; i < m; ++i) {
            const double di = dy[i];
            const double* mv = mn.values + i * d;
            const double* xv2 = xn.values + i * d;
            double* gi = g.data() + i * d;
            for (int64_t j = 0; j < d; ++j) gi[j] += di * (xv2[j] - mv[j]);
        }
    };
    return out;
}

Var Tape::gaussian_kl(Var muv, Var lvv) {
    const Node& mu = node(muv);
    const Node& lv = node(lvv);
    if (mu.shape != lv.shape || mu.shape.size() != 2) {
        throw config_error("gaussian_kl: shape mismatch mu=" + shape_str(mu.shape) +
                           " log_var=" + shape_str(lv.shape));
    }
    const int64_t m = mu.shape[0], s = mu.shape[1];
    const double* mud = mu.values;
    const double* lvd = lv.values;
    const bool needs = mu.needs_grad || lv.needs_grad;

    Var out = make_like(std::array<int64_t, 1>{m}, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* mi = mud + i * s;
        const double* li = lvd + i * s;
        for (int64_t j = 0; j < s; ++j) {
            acc += mi[j] * mi[j] + std::exp(li[j]) - li[j] - 1.0;
        }
        o.storage[static_cast<size_t>(i)] = 0.5 * acc;
    }
    const int32_t mi_id = muv.id, li_id = lvv.id;
    o.backprop = [mi_id, li_id, m, s](Tape& tp, const Node& self) {
        Node& mn = tp.nodes_[static_cast<size_t>(mi_id)];
        Node& ln = tp.nodes_[static_cast<size_t>(li_id)];
        const double* dy = self.grad.data();
        if (mn.needs_grad) {
            auto& g = tp.grad_buf(mi_id);
            for (int64_t i = 0; i < m; ++i) {
                const double di = dy[i];
                const double* mv = mn.values + i * s;
                double* gi = g.data() + i * s;
                for (int64_t j = 0; j < s; ++j) gi[j] += di * mv[j];
            }
        }
        if (ln.needs_grad) {
            auto& g = tp.grad_buf(li_id);
            for (int64_t i = 0; i < m; ++i) {
                const double di = dy[i];
                const double* lvv2 = ln.values + i * s;
                double* gi = g.data() + i * s;
                for (int64_t j = 0; j < s; ++j) gi[j] += di * 0.5 * (std::exp(lvv2[j]) - 1.0);
            }
        }
    };
    return out;
}

Var Tape::row_sum(Var av) {
    const Node& a = node(av);
    if (a.shape.size() != 2) throw config_error("row_sum: expected rank-2, got " + shape_str(a.shape));
    const int64_t m = a.shape[0], n = a.shape[1];
    const double* ad = a.values;
    const bool needs = a.needs_grad;

    Var out = make_like(std::array<int64_t, 1>{m}, needs);
    Node& o = nodes_.back();
    for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* ai = ad + i * n;
        for (int64_t j = 0; j < n; ++j) acc += ai[j];
        o.storage[static_cast<size_t>(i)] = acc;
    }
    const int32_t ai_id = av.id;
    o.backprop = [ai_id, m, n](Tape& tp, const Node& self) {
        Node& an = tp.nodes_[static_cast<size_t>(ai_id)];
        if (!an.needs_grad) return;
        auto& g = tp.grad_buf(ai_id);
        const double* dy = self.grad.data();
        for (int64_t i = 0; i < m; ++i) {
            double* gi = g.data() + i * n;
            for (int64_t j = 0; j < n; ++j) gi[j] += dy[i];
        }
    };
    return out;
}

Var Tape::sum(Var av) {
    const Node& a = node(av);
    const int64_t count = a.n;
    const double* ad = a.values;
    const bool needs = a.needs_grad;

    Var out = make_like(std::array<int64_t, 1>{1}, needs);
    Node& o = nodes_.back();
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) acc += ad[i];
    o.storage[0] = acc;
    const int32_t ai_id = av.id;
    o.backprop = [ai_id](Tape& tp, const Node& self) {
        Node& an = tp.nodes_[static_cast<size_t>(ai_id)];
        if (!an.needs_grad) return;
        auto& g = tp.grad_buf(ai_id);
        const double d0 = self.grad[0];
        for (size_t i = 0; i < g.size(); ++i) g[i] += d0;
    };
    return out;
}

Var Tape::mean(Var av) {
    const Node& a = node(av);
    const int64_t count = a.n;
    const double* ad = a.values;
    const bool needs = a.needs_grad;
    const double inv = 1.0 / static_cast<double>(count);

    Var out = make_like(std::array<int64_t, 1>{1}, needs);
    Node& o = nodes_.back();
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) acc += ad[i];
    o.storage[0] = acc * inv;
    const int32_t ai_id = av.id;
    o.backprop = [ai_id, inv](Tape& tp, const Node& self) {
        Node& an = tp.nodes_[static_cast<size_t>(ai_id)];
        if (!an.needs_grad) return;
        auto& g = tp.grad_buf(ai_id);
        const double d0 = self.grad[0] * inv;
        for (size_t i = 0; i < g.size(); ++i) g[i] += d0;
    };
    return out;
}

void Tape::backward(Var loss) {
    const size_t id = check(loss);
    if (nodes_[id].n != 1) {
        throw usage_error("backward: loss must be scalar, got shape " + shape_str(nodes_[id].shape));
    }
    // reset gradients from any previous pass so consecutive passes match
    for (Node& n : nodes_) {
        if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }
    grad_buf(static_cast<int32_t>(id))[0] = 1.0;
    for (size_t i = id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backprop && !n.grad.empty()) n.backprop(*this, n);
    }
    backward_ran_ = true;
}

std::span<const double> Tape::data(Var v) const {
    const Node& n = node(v);
    return {n.values, static_cast<size_t>(n.n)};
}

std::span<const int64_t> Tape::shape(Var v) const { return node(v).shape; }

int64_t Tape::numel(Var v) const { return node(v).n; }

Tensor Tape::to_tensor(Var v) const {
    const Node& n = node(v);
    return Tensor(n.shape, std::vector<double>(n.values, n.values + n.n));
}

std::span<const double> Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!backward_ran_) throw usage_error("grad: backward() has not been run on this tape");
    if (n.grad.empty()) {
        if (zero_grad_.size() < static_cast<size_t>(n.n)) zero_grad_.assign(static_cast<size_t>(n.n), 0.0);
        return {zero_grad_.data(), static_cast<size_t>(n.n)};
    }
    return {n.grad.data(), static_cast<size_t>(n.n)};
}

} // namespace scvae
