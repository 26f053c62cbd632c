#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scvae/model.hpp"

namespace scvae {

struct FisherRecord {
    Side side;
    int layer = 0;
    double fisher = 0.0;         // mean squared per-sample score per parameter
    double grad_sq_norm = 0.0;   // squared L2 norm of the full-batch gradient
    int64_t param_count = 0;
    bool zero_grad = false;      // warning flag, not an error
};

struct FisherReport {
    std::string run_id;
    int epoch = 0;
    std::vector<FisherRecord> records;
    // parameter-count-weighted means over a side's layers
    double encoder_mean = 0.0;
    double decoder_mean = 0.0;
    double overall_mean = 0.0;
};

struct FisherOptions {
    double loss_scale = 1.0;        // diagnostics: scales the per-sample loss
    bool allow_small_batch = false; // lifts the batch >= 32 precondition
};

// Per-layer empirical Fisher of the per-sample negative ELBO on a fixed
// evaluation batch. eps must be [batch x latent_dim], drawn once by the
// caller so the probe is deterministic.
FisherReport layer_fisher(const Model& model, const Tensor& batch, const Tensor& eps,
                          const std::string& run_id, int epoch,
                          const FisherOptions& opts = {});

// ---- recurrence diagnostic ----------------------------------------------

struct RecurrencePair {
    Side side;
    int layer_lo = 0;            // pair (layer_lo, layer_lo + 1)
    double measured = 0.0;       // fisher(l+1) / fisher(l)
    double predicted = 0.0;      // per-parameter squared gradient-norm ratio
    double rel_discrepancy = 0.0;
};

struct RecurrenceDiagnostic {
    std::vector<RecurrencePair> pairs;
    std::vector<std::pair<Side, int>> skipped;   // zero-denominator pairs
    double monotone_decay_rate = 0.0;            // fraction with fisher(l+1) <= fisher(l)
    int total_adjacent_pairs = 0;
};

RecurrenceDiagnostic recurrence_check(const FisherReport& report);

// ---- skip-connection gain -----------------------------------------------

struct GainRow {
    Side side;
    int layer = 0;
    double gain = 0.0;           // fisher_skip - fisher_plain
};

struct SkipGainTable {
    std::vector<GainRow> rows;
    double encoder_mean_gain = 0.0;
    double decoder_mean_gain = 0.0;
    double overall_mean_gain = 0.0;
};

// Requires architecturally aligned reports (same layer set and counts).
SkipGainTable skip_gain(const FisherReport& with_skips, const FisherReport& plain);

// ---- CSV ------------------------------------------------------------------

// Appends rows "run_id,epoch,side,layer,fisher,grad_sq_norm,param_count";
// writes the header when the file does not exist yet.
void append_fisher_csv(const std::string& path, const FisherReport& report);
std::vector<FisherReport> read_fisher_csv(const std::string& path);

// ---- generic probe core ----------------------------------------------------

// build(tape, s) constructs sample s's scalar loss and returns the grouped
// parameter handles to probe. Returns, per group, the mean over samples of
// the summed squared gradients. Samples run independently (in parallel when
// OpenMP is on); the reduction is in ascending sample order, so the result
// does not depend on the thread count.
struct ProbeGraph {
    Var loss;
    std::vector<std::vector<Var>> groups;
};

std::vector<double> mean_squared_group_scores(
    int n_samples, const std::function<ProbeGraph(Tape&, int)>& build);

} // namespace scvae
