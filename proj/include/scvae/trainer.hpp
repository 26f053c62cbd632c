#pragma once

#include <string>
#include <vector>

#include "scvae/config.hpp"
#include "scvae/data_io.hpp"
#include "scvae/eval.hpp"
#include "scvae/fisher.hpp"
#include "scvae/model.hpp"

namespace scvae {

struct EpochRecord {
    int epoch = 0;
    double train_elbo = 0.0;
    double val_elbo = 0.0;
    double wall_seconds = 0.0;
};

struct RunArtifacts {
    std::string checkpoint;        // latest parameters (SCV1)
    std::string best_checkpoint;   // best validation ELBO (SCV1)
    std::string train_state;       // optimizer sidecar for resume
    std::string fisher_csv;
    std::string metrics;
    std::string runlog;
};

struct RunLog {
    std::string run_id;
    std::vector<EpochRecord> epochs;
    std::vector<FisherReport> fisher_reports;
    EvalMetrics metrics;
    bool has_metrics = false;
    RunArtifacts artifacts;
};

RunArtifacts run_artifact_paths(const RunConfig& cfg);

DatasetSplit load_dataset(const RunConfig& cfg);

// Full training loop: seeded minibatch shuffling, one adam step per batch on
// the negative ELBO, Fisher probes on a frozen validation batch at epoch
// boundaries, per-epoch checkpoints, and a final evaluation of the best
// validation checkpoint. Resumes from the sidecar at epoch granularity when
// cfg.resume is set and artifacts exist.
RunLog train(const RunConfig& cfg);

// Evaluation batch for the Fisher probe: first min(1024, |val|) validation
// rows plus a fixed eps draw.
struct ProbeBatch {
    Tensor x;
    Tensor eps;
};
ProbeBatch make_probe_batch(const DatasetSplit& data, int latent_dim, uint64_t seed);

} // namespace scvae
