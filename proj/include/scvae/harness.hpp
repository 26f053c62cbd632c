#pragma once

#include <string>
#include <vector>

#include "scvae/config.hpp"
#include "scvae/fisher.hpp"
#include "scvae/trainer.hpp"

namespace scvae {

struct SweepRow {
    int depth = 0;
    std::string skip_mode;
    uint64_t seed = 0;
    double encoder_mean = 0.0;
    double decoder_mean = 0.0;
    double overall_mean = 0.0;
    double nll = 0.0;
    double accuracy = 0.0;
    FisherReport final_report;
};

// Trains every (depth, skip_mode, seed) combination from the config with
// matched seeds and epochs, writes <output_dir>/sweep.csv, and returns the
// rows with their end-of-training Fisher reports.
std::vector<SweepRow> run_depth_sweep(const RunConfig& base);

struct Table1Row {
    std::string preset;
    uint64_t seed = 0;
    double nll = 0.0;
    double accuracy = 0.0;
};

struct Table1Result {
    std::vector<Table1Row> rows;
    std::string rendered;       // text table of per-preset means
};

// Trains each preset per seed, writes <output_dir>/table1.csv and .txt.
Table1Result run_table1(const RunConfig& base);

} // namespace scvae
