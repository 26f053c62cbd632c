#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scvae/model.hpp"

namespace scvae {

struct SynthSpec {
    int classes = 4;
    int per_class = 250;
    int dim = 64;
};

// One experiment run, parsed from the flat "key = value" config format.
struct RunConfig {
    std::string preset;              // empty when the architecture is explicit
    NetworkConfig network;           // explicit fields; widths/latent also apply to presets
    bool explicit_arch = false;

    std::string dataset;             // "mnist" | "synth"
    std::string mnist_dir;
    SynthSpec synth;

    int epochs = 20;
    int batch_size = 100;
    uint64_t seed = 1;
    double learning_rate = 1e-3;
    std::string output_dir = "out";
    int fisher_interval = 1;         // epochs between probes; 0 disables
    int eval_samples = 100;          // importance samples for the NLL
    int classifier_epochs = 30;
    std::string run_id;              // derived from preset/seed when empty
    bool resume = false;

    // sweep / table drivers
    std::vector<int> sweep_depths = {1, 3, 5, 7};
    std::vector<std::string> sweep_skips = {"none", "every_layer"};
    std::vector<uint64_t> seeds = {1, 2, 3};
    int preset_depth = 11;
    std::vector<std::string> table1_presets;   // empty = all six

    // Architecture with preset and dataset dimensionality applied.
    NetworkConfig resolved_network() const;
    std::string resolved_run_id() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

} // namespace scvae
