#pragma once

#include <cstdint>
#include <string>

#include "scvae/adam.hpp"
#include "scvae/param_store.hpp"

namespace scvae {

// Flat binary checkpoint: magic "SCV1", then per parameter (weights and
// biases are separate records, store order): layer index (u32 LE), side tag
// (u8), shape rank (u32 LE), dims (u32 LE each), payload as little-endian
// 64-bit reals.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

// Verifies the loaded store matches the expected architecture shape-for-shape.
void check_params_match(const ParamStore& loaded, const ParamStore& expected);

// Sidecar with the optimizer accumulators and epoch cursor so interrupted
// runs can resume exactly. Not part of the checkpoint format.
struct TrainState {
    int epoch = 0;
    double best_val_elbo = 0.0;
    bool has_best = false;
    OptimizerState optimizer;
};

void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path, const ParamStore& params);

} // namespace scvae
