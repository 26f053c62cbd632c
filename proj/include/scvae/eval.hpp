#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "scvae/model.hpp"

namespace scvae {

struct EvalMetrics {
    double nll = 0.0;        // nats per image, lower is better
    double accuracy = 0.0;   // latent-classification accuracy in [0,1]
    int n_importance_samples = 0;
    int classifier_epochs = 0;
};

// Importance-weighted negative log-likelihood estimate, mean over the given
// images. S proposal samples per image, computed in log-space with a
// running max so large S stays stable. Deterministic in (model, data, seed).
double estimate_nll(const Model& model, const Tensor& images, int S, uint64_t seed);

// One-vs-rest linear hinge classifier (Pegasos-style subgradient descent)
// on latent means. Returns test accuracy.
double latent_classify(const Tensor& train_latents, std::span<const uint8_t> train_labels,
                       const Tensor& test_latents, std::span<const uint8_t> test_labels,
                       int epochs, uint64_t seed);

// Posterior means/log-variances for every row, encoded in chunks.
GaussianLatent encode_dataset(const Model& model, const Tensor& images);

// CSV: header "label,mu_1..mu_s,logvar_1..logvar_s", one row per sample.
void export_latents(const Model& model, const Tensor& images, std::span<const uint8_t> labels,
                    const std::string& path);

struct LatentCsv {
    std::vector<uint8_t> labels;
    Tensor mu;
    Tensor log_var;
};
LatentCsv read_latents_csv(const std::string& path);

void write_metrics_file(const std::string& path, const EvalMetrics& m, const std::string& preset,
                        uint64_t seed, int epochs);

} // namespace scvae
