#include "scvae/model.hpp"

#include <algorithm>
#include <cmath>

#include "scvae/errors.hpp"

namespace scvae {

Likelihood likelihood_from_string(const std::string& s) {
    if (s == "bernoulli") return Likelihood::bernoulli;
    if (s == "diagonal_gaussian") return Likelihood::diagonal_gaussian;
    throw config_error("unknown likelihood '" + s + "' (expected bernoulli|diagonal_gaussian)");
}

const char* likelihood_name(Likelihood l) {
    return l == Likelihood::bernoulli ? "bernoulli" : "diagonal_gaussian";
}

namespace {

void validate_skip(const SkipSpec& spec, int depth, const char* side) {
    if (spec.mode != SkipMode::long_range) return;
    if (!(0 < spec.from && spec.from < spec.to && spec.to <= depth)) {
        throw config_error(std::string("long skip on ") + side + ": endpoints (" +
                           std::to_string(spec.from) + "," + std::to_string(spec.to) +
                           ") out of range for depth " + std::to_string(depth));
    }
    if (spec.to - spec.from < 2) {
        throw config_error(std::string("long skip on ") + side +
                           ": must span at least 2 layers, got " +
                           std::to_string(spec.to - spec.from));
    }
}

} // namespace

void NetworkConfig::validate() const {
    if (encoder_depth < 1 || decoder_depth < 1) throw config_error("network depths must be >= 1");
    if (hidden_width < 1) throw config_error("hidden_width must be >= 1");
    if (latent_dim < 1) throw config_error("latent_dim must be >= 1");
    if (data_dim < 1) throw config_error("data_dim must be >= 1");
    validate_skip(skip_encoder, encoder_depth, "encoder");
    validate_skip(skip_decoder, decoder_depth, "decoder");
}

NetworkConfig preset_config(const std::string& name, int deep_depth) {
    if (deep_depth < 3) throw config_error("preset deep depth must be >= 3");
    NetworkConfig c;
    if (name == "vae1l") {
        c.encoder_depth = 1;
        c.decoder_depth = 1;
    } else if (name == "vae11l") {
        c.encoder_depth = deep_depth;
        c.decoder_depth = deep_depth;
    } else if (name == "vae-qpp") {
        c.encoder_depth = deep_depth;
        c.decoder_depth = 1;
    } else if (name == "vae-ppp") {
        c.encoder_depth = 1;
        c.decoder_depth = deep_depth;
    } else if (name == "scvae") {
        c.encoder_depth = deep_depth;
        c.decoder_depth = deep_depth;
        c.skip_encoder.mode = SkipMode::every_layer;
        c.skip_decoder.mode = SkipMode::every_layer;
    } else if (name == "scvae-l") {
        c.encoder_depth = deep_depth;
        c.decoder_depth = deep_depth;
        c.skip_encoder = SkipSpec{SkipMode::long_range, 1, deep_depth};
    } else {
        throw config_error("unknown preset '" + name + "'");
    }
    return c;
}

bool is_preset_name(const std::string& name) {
    for (const auto& p : preset_names()) {
        if (p == name) return true;
    }
    return false;
}

std::vector<std::string> preset_names() {
    return {"vae1l", "vae11l", "vae-qpp", "vae-ppp", "scvae", "scvae-l"};
}

namespace {

Tensor init_weight(int64_t n_out, int64_t n_in, Rng& rng) {
    // fan-in scaled uniform, gain 1: limit sqrt(3/fan_in) gives variance 1/fan_in
    const double limit = std::sqrt(3.0 / static_cast<double>(n_in));
    Tensor w = Tensor::zeros({n_out, n_in});
    for (auto& v : w.data) v = rng.uniform(-limit, limit);
    return w;
}

int width_at(const SideWiring& side, int layer) {
    return layer == 0 ? side.input_dim : side.widths[static_cast<size_t>(layer - 1)];
}

std::vector<std::pair<int, int>> skip_pairs_for(const SkipSpec& spec, int depth) {
    std::vector<std::pair<int, int>> pairs;
    if (spec.mode == SkipMode::every_layer) {
        // one edge per adjacent hidden pair; the side input is not skipped
        for (int l = 2; l <= depth; ++l) pairs.emplace_back(l - 1, l);
    } else if (spec.mode == SkipMode::long_range) {
        pairs.emplace_back(spec.from, spec.to);
    }
    return pairs;
}

} // namespace

SideWiring make_side_wiring(int input_dim, std::vector<int> widths,
                            const std::vector<std::pair<int, int>>& skip_pairs, Rng& rng) {
    SideWiring side;
    side.input_dim = input_dim;
    side.widths = std::move(widths);
    for (auto [from, to] : skip_pairs) {
        if (from < 0 || to < 1 || from >= to || to > side.depth()) {
            throw config_error("skip edge (" + std::to_string(from) + "," + std::to_string(to) +
                               ") out of range for depth " + std::to_string(side.depth()));
        }
        SkipEdge edge;
        edge.source = from;
        edge.target = to;
        const int w_src = width_at(side, from);
        const int w_dst = width_at(side, to);
        if (w_src != w_dst) {
            // frozen width-adapting projection, drawn once from the build seed
            edge.projection = init_weight(w_dst, w_src, rng);
        }
        side.skips.push_back(std::move(edge));
    }
    return side;
}

Model build_network(const NetworkConfig& config, uint64_t seed) {
    config.validate();
    Model model;
    model.wiring.config = config;

    Rng rng(mix_seed(seed, 0x5c17));

    // encoder stack
    for (int l = 1; l <= config.encoder_depth; ++l) {
        const int n_in = l == 1 ? config.data_dim : config.hidden_width;
        ParamEntry e;
        e.side = Side::encoder;
        e.layer = l;
        e.weight = init_weight(config.hidden_width, n_in, rng);
        e.bias = Tensor::zeros({config.hidden_width});
        model.layout.encoder_layers.push_back(static_cast<int>(model.params.entries.size()));
        model.params.entries.push_back(std::move(e));
    }
    // latent heads: layer 1 = mu, layer 2 = log-variance
    {
        ParamEntry mu;
        mu.side = Side::latent_head;
        mu.layer = 1;
        mu.weight = init_weight(config.latent_dim, config.hidden_width, rng);
        mu.bias = Tensor::zeros({config.latent_dim});
        model.layout.head_mu = static_cast<int>(model.params.entries.size());
        model.params.entries.push_back(std::move(mu));

        ParamEntry lv;
        lv.side = Side::latent_head;
        lv.layer = 2;
        lv.weight = init_weight(config.latent_dim, config.hidden_width, rng);
        lv.bias = Tensor::zeros({config.latent_dim});
        model.layout.head_log_var = static_cast<int>(model.params.entries.size());
        model.params.entries.push_back(std::move(lv));
    }
    // decoder stack; the output layer is the last decoder layer
    for (int l = 1; l <= config.decoder_depth; ++l) {
        const int n_in = l == 1 ? config.latent_dim : config.hidden_width;
        ParamEntry e;
        e.side = Side::decoder;
        e.layer = l;
        e.weight = init_weight(config.hidden_width, n_in, rng);
        e.bias = Tensor::zeros({config.hidden_width});
        model.layout.decoder_layers.push_back(static_cast<int>(model.params.entries.size()));
        model.params.entries.push_back(std::move(e));
    }
    {
        ParamEntry out;
        out.side = Side::decoder;
        out.layer = config.decoder_depth + 1;
        out.weight = init_weight(config.data_dim, config.hidden_width, rng);
        out.bias = Tensor::zeros({config.data_dim});
        model.layout.decoder_layers.push_back(static_cast<int>(model.params.entries.size()));
        model.params.entries.push_back(std::move(out));
    }

    std::vector<int> enc_widths(static_cast<size_t>(config.encoder_depth), config.hidden_width);
    std::vector<int> dec_widths(static_cast<size_t>(config.decoder_depth), config.hidden_width);
    model.wiring.encoder = make_side_wiring(config.data_dim, std::move(enc_widths),
                                            skip_pairs_for(config.skip_encoder, config.encoder_depth), rng);
    model.wiring.decoder = make_side_wiring(config.latent_dim, std::move(dec_widths),
                                            skip_pairs_for(config.skip_decoder, config.decoder_depth), rng);
    return model;
}

BoundParams bind_params(Tape& tape, const ParamStore& params) {
    BoundParams bp;
    bp.weights.reserve(params.entries.size());
    bp.biases.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        bp.weights.push_back(tape.param(e.weight));
        bp.biases.push_back(tape.param(e.bias));
    }
    return bp;
}

namespace {

void check_layer_finite(const Tape& tape, Var h, const char* side, int layer) {
    for (double v : tape.data(h)) {
        if (!std::isfinite(v)) {
            throw numeric_error(std::string("non-finite activation in ") + side + " layer " +
                                std::to_string(layer));
        }
    }
}

// Runs one side's hidden stack: h_l = act(W_l h_{l-1} + b_l) + sum of skip
// contributions targeting l. Returns h_depth.
Var run_stack(Tape& tape, const SideWiring& side, Activation act, const BoundParams& bp,
              const std::vector<int>& entry_idx, Var input, const char* side_label,
              std::vector<Var>* trace, int n_hidden) {
    std::vector<Var> hidden(static_cast<size_t>(n_hidden + 1));
    hidden[0] = input;
    for (int l = 1; l <= n_hidden; ++l) {
        const int idx = entry_idx[static_cast<size_t>(l - 1)];
        Var pre = tape.affine(hidden[static_cast<size_t>(l - 1)],
                              bp.weights[static_cast<size_t>(idx)],
                              bp.biases[static_cast<size_t>(idx)]);
        Var h = tape.activation(act, pre);
        for (const auto& edge : side.skips) {
            if (edge.target != l) continue;
            Var src = hidden[static_cast<size_t>(edge.source)];
            Var g = edge.identity() ? src : tape.linear(src, tape.constant_view(edge.projection));
            h = tape.add(h, g);
        }
        check_layer_finite(tape, h, side_label, l);
        hidden[static_cast<size_t>(l)] = h;
        if (trace) trace->push_back(h);
    }
    return hidden[static_cast<size_t>(n_hidden)];
}

} // namespace

LatentVars encode_graph(Tape& tape, const Model& model, const BoundParams& bp, Var x,
                        std::vector<Var>* hidden_trace) {
    const auto& cfg = model.wiring.config;
    Var h = run_stack(tape, model.wiring.encoder, cfg.activation, bp,
                      model.layout.encoder_layers, x, "encoder", hidden_trace,
                      cfg.encoder_depth);
    const int mu_idx = model.layout.head_mu;
    const int lv_idx = model.layout.head_log_var;
    LatentVars latent;
    latent.mu = tape.affine(h, bp.weights[static_cast<size_t>(mu_idx)],
                            bp.biases[static_cast<size_t>(mu_idx)]);
    Var lv_raw = tape.affine(h, bp.weights[static_cast<size_t>(lv_idx)],
                             bp.biases[static_cast<size_t>(lv_idx)]);
    latent.log_var = tape.clamp(lv_raw, kLogVarClampLo, kLogVarClampHi);
    return latent;
}

Var decode_graph(Tape& tape, const Model& model, const BoundParams& bp, Var z,
                 std::vector<Var>* hidden_trace) {
    const auto& cfg = model.wiring.config;
    Var h = run_stack(tape, model.wiring.decoder, cfg.activation, bp,
                      model.layout.decoder_layers, z, "decoder", hidden_trace,
                      cfg.decoder_depth);
    const int out_idx = model.layout.decoder_layers.back();
    return tape.affine(h, bp.weights[static_cast<size_t>(out_idx)],
                       bp.biases[static_cast<size_t>(out_idx)]);
}

ElboVars elbo_graph(Tape& tape, const Model& model, Var x, Var recon_params,
                    const LatentVars& latent) {
    ElboVars ev;
    if (model.wiring.config.likelihood == Likelihood::bernoulli) {
        ev.recon_rows = tape.bernoulli_loglik(recon_params, x);
    } else {
        ev.recon_rows = tape.gaussian_loglik(recon_params, x);
    }
    ev.kl_rows = tape.gaussian_kl(latent.mu, latent.log_var);
    ev.recon_mean = tape.mean(ev.recon_rows);
    ev.kl_mean = tape.mean(ev.kl_rows);
    ev.elbo_mean = tape.sub(ev.recon_mean, ev.kl_mean);
    ev.neg_elbo = tape.scale(ev.elbo_mean, -1.0);
    return ev;
}

void check_pixel_range(const Tensor& x) {
    for (double v : x.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw config_error("pixel value " + std::to_string(v) + " outside [0,1]");
        }
    }
}

EncodeResult encode(const Model& model, const Tensor& x) {
    Tape tape;
    BoundParams bp = bind_params(tape, model.params);
    Var xv = tape.constant_view(x);
    std::vector<Var> trace;
    LatentVars lat = encode_graph(tape, model, bp, xv, &trace);
    EncodeResult res;
    res.latent.mu = tape.to_tensor(lat.mu);
    res.latent.log_var = tape.to_tensor(lat.log_var);
    res.hidden_trace.reserve(trace.size());
    for (Var h : trace) res.hidden_trace.push_back(tape.to_tensor(h));
    return res;
}

Tensor reparameterize(const GaussianLatent& latent, const Tensor& eps) {
    if (!same_shape(latent.mu, latent.log_var) || !same_shape(latent.mu, eps)) {
        throw config_error("reparameterize: shape mismatch mu=" + shape_str(latent.mu.shape) +
                           " log_var=" + shape_str(latent.log_var.shape) +
                           " eps=" + shape_str(eps.shape));
    }
    Tensor z = Tensor::zeros(latent.mu.shape);
    for (size_t i = 0; i < z.data.size(); ++i) {
        z.data[i] = latent.mu.data[i] + std::exp(0.5 * latent.log_var.data[i]) * eps.data[i];
    }
    return z;
}

DecodeResult decode(const Model& model, const Tensor& z) {
    Tape tape;
    BoundParams bp = bind_params(tape, model.params);
    Var zv = tape.constant_view(z);
    std::vector<Var> trace;
    Var out = decode_graph(tape, model, bp, zv, &trace);
    DecodeResult res;
    res.recon_params = tape.to_tensor(out);
    res.hidden_trace.reserve(trace.size());
    for (Var h : trace) res.hidden_trace.push_back(tape.to_tensor(h));
    return res;
}

ElboTerms elbo(const Model& model, const Tensor& x, const Tensor& recon_params,
               const GaussianLatent& latent) {
    if (model.wiring.config.likelihood == Likelihood::bernoulli) check_pixel_range(x);
    Tape tape;
    Var xv = tape.constant_view(x);
    Var rv = tape.constant_view(recon_params);
    LatentVars lat;
    lat.mu = tape.constant_view(latent.mu);
    lat.log_var = tape.constant_view(latent.log_var);
    ElboVars ev = elbo_graph(tape, model, xv, rv, lat);
    ElboTerms terms;
    terms.reconstruction = tape.data(ev.recon_mean)[0];
    terms.kl = tape.data(ev.kl_mean)[0];
    terms.elbo = tape.data(ev.elbo_mean)[0];
    return terms;
}

} // namespace scvae
