#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scvae/param_store.hpp"
#include "scvae/rng.hpp"
#include "scvae/tape.hpp"
#include "scvae/tensor.hpp"

namespace scvae {

enum class Likelihood { bernoulli, diagonal_gaussian };
Likelihood likelihood_from_string(const std::string& s);
const char* likelihood_name(Likelihood l);

enum class SkipMode { none, every_layer, long_range };

struct SkipSpec {
    SkipMode mode = SkipMode::none;
    int from = 0;   // long_range only: source hidden layer
    int to = 0;     // long_range only: target hidden layer
};

// log-variance head outputs are clamped to this range to keep sigma away
// from 0 and overflow
inline constexpr double kLogVarClampLo = -10.0;
inline constexpr double kLogVarClampHi = 10.0;

struct NetworkConfig {
    int encoder_depth = 1;
    int decoder_depth = 1;
    int hidden_width = 500;
    int latent_dim = 50;
    int data_dim = 784;
    SkipSpec skip_encoder;
    SkipSpec skip_decoder;
    Activation activation = Activation::tanh_fn;
    Likelihood likelihood = Likelihood::bernoulli;

    void validate() const;   // throws config_error
};

// The named presets. deep_depth substitutes for the 11-hidden-layer depth so
// the same preset family can be built at reduced depth for fast runs.
NetworkConfig preset_config(const std::string& name, int deep_depth = 11);
bool is_preset_name(const std::string& name);
std::vector<std::string> preset_names();

// One additive shortcut: post-activation output of `source` (0 = the side's
// input) is added to the post-activation output of `target`. `projection`
// is a frozen width-adapting matrix, empty when the widths already agree.
struct SkipEdge {
    int source = 0;
    int target = 0;
    Tensor projection;
    bool identity() const { return projection.data.empty(); }
};

struct SideWiring {
    int input_dim = 0;
    std::vector<int> widths;       // hidden widths, layer 1..depth
    std::vector<SkipEdge> skips;
    int depth() const { return static_cast<int>(widths.size()); }
};

struct WiringPlan {
    NetworkConfig config;
    SideWiring encoder;
    SideWiring decoder;
};

// Index map from (role) to ParamStore entry positions.
struct ParamLayout {
    std::vector<int> encoder_layers;   // entry index of encoder layer l at [l-1]
    int head_mu = -1;
    int head_log_var = -1;
    std::vector<int> decoder_layers;   // hidden layers then the output layer last
};

struct Model {
    ParamStore params;
    WiringPlan wiring;
    ParamLayout layout;
};

Model build_network(const NetworkConfig& config, uint64_t seed);

// Builds skip edges for a side outside of NetworkConfig (used directly by
// tests that exercise width-adapting projections).
SideWiring make_side_wiring(int input_dim, std::vector<int> widths,
                            const std::vector<std::pair<int, int>>& skip_pairs, Rng& rng);

// ---- tape-level graph builders ----------------------------------------

struct BoundParams {
    std::vector<Var> weights;   // aligned with ParamStore entries
    std::vector<Var> biases;
};

BoundParams bind_params(Tape& tape, const ParamStore& params);

struct LatentVars {
    Var mu;
    Var log_var;
};

LatentVars encode_graph(Tape& tape, const Model& model, const BoundParams& bp, Var x,
                        std::vector<Var>* hidden_trace = nullptr);

Var decode_graph(Tape& tape, const Model& model, const BoundParams& bp, Var z,
                 std::vector<Var>* hidden_trace = nullptr);

struct ElboVars {
    Var recon_rows;   // [batch] log-likelihood per sample
    Var kl_rows;      // [batch]
    Var recon_mean;   // scalar
    Var kl_mean;      // scalar
    Var elbo_mean;    // scalar
    Var neg_elbo;     // scalar training loss
};

ElboVars elbo_graph(Tape& tape, const Model& model, Var x, Var recon_params,
                    const LatentVars& latent);

// ---- value-level wrappers ----------------------------------------------

struct GaussianLatent {
    Tensor mu;        // [batch x s]
    Tensor log_var;   // [batch x s]
};

struct EncodeResult {
    GaussianLatent latent;
    std::vector<Tensor> hidden_trace;
};

struct DecodeResult {
    Tensor recon_params;      // [batch x data_dim]; logits for bernoulli
    std::vector<Tensor> hidden_trace;
};

struct ElboTerms {
    double reconstruction = 0.0;   // mean over batch, nats
    double kl = 0.0;               // mean over batch, nats
    double elbo = 0.0;             // reconstruction - kl
};

EncodeResult encode(const Model& model, const Tensor& x);
Tensor reparameterize(const GaussianLatent& latent, const Tensor& eps);
DecodeResult decode(const Model& model, const Tensor& z);
ElboTerms elbo(const Model& model, const Tensor& x, const Tensor& recon_params,
               const GaussianLatent& latent);

void check_pixel_range(const Tensor& x);   // bernoulli inputs must be in [0,1]

} // namespace scvae
