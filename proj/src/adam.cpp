#include "scvae/adam.hpp"

#include <cmath>

#include "scvae/errors.hpp"

namespace scvae {

const char* side_name(Side s) {
    switch (s) {
        case Side::encoder: return "encoder";
        case Side::decoder: return "decoder";
        case Side::latent_head: return "latent-head";
    }
    return "?";
}

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.weight.numel() + e.bias.numel();
    return n;
}

std::string ParamStore::entry_label(size_t idx) const {
    const auto& e = entries[idx];
    return std::string(side_name(e.side)) + " layer " + std::to_string(e.layer);
}

int ParamStore::find(Side side, int layer) const {
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].side == side && entries[i].layer == layer) return static_cast<int>(i);
    }
    return -1;
}

void ParamStore::clear_grads() {
    for (auto& e : entries) {
        e.weight.clear_grad();
        e.bias.clear_grad();
    }
}

OptimizerState make_optimizer_state(const ParamStore& params, double learning_rate) {
    OptimizerState st;
    st.learning_rate = learning_rate;
    st.moments.resize(params.entries.size());
    for (size_t i = 0; i < params.entries.size(); ++i) {
        const auto& e = params.entries[i];
        auto& m = st.moments[i];
        m.m_w.assign(e.weight.data.size(), 0.0);
        m.v_w.assign(e.weight.data.size(), 0.0);
        m.m_b.assign(e.bias.data.size(), 0.0);
        m.v_b.assign(e.bias.data.size(), 0.0);
    }
    return st;
}

namespace {

void update_block(std::vector<double>& value, std::vector<double>& grad,
                  std::vector<double>& m, std::vector<double>& v,
                  const OptimizerState& st, double bc1, double bc2) {
    for (size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        value[i] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
    }
}

} // namespace

void adam_step(ParamStore& params, OptimizerState& state) {
    if (state.moments.size() != params.entries.size()) {
        throw usage_error("adam_step: optimizer state does not match parameter store");
    }
    for (size_t i = 0; i < params.entries.size(); ++i) {
        auto& e = params.entries[i];
        if (!e.weight.has_grad()) {
            throw usage_error("adam_step: missing gradient for " + params.entry_label(i) + " weight");
        }
        if (!e.bias.has_grad()) {
            throw usage_error("adam_step: missing gradient for " + params.entry_label(i) + " bias");
        }
    }
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.entries.size(); ++i) {
        auto& e = params.entries[i];
        auto& mo = state.moments[i];
        update_block(e.weight.data, e.weight.grad, mo.m_w, mo.v_w, state, bc1, bc2);
        update_block(e.bias.data, e.bias.grad, mo.m_b, mo.v_b, state, bc1, bc2);
    }
    params.clear_grads();
}

} // namespace scvae
