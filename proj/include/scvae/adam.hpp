#pragma once

#include <cstdint>
#include <vector>

#include "scvae/param_store.hpp"

namespace scvae {

// Bias-corrected adaptive-moment optimizer state. Accumulators are kept in
// ParamStore entry order, weight then bias per entry.
struct OptimizerState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t step_count = 0;

    struct Moments {
        std::vector<double> m_w, v_w, m_b, v_b;
    };
    std::vector<Moments> moments;
};

OptimizerState make_optimizer_state(const ParamStore& params, double learning_rate);

// One update from the gradients stored on the parameters; clears them after.
// Throws usage_error naming the parameter if a gradient is missing.
void adam_step(ParamStore& params, OptimizerState& state);

} // namespace scvae
