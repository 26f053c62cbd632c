#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "scvae/errors.hpp"
#include "scvae/model.hpp"
#include "scvae/rng.hpp"

using namespace scvae;

namespace {

Tensor random_uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Tensor random_gaussian(std::vector<int64_t> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.gaussian();
    return t;
}

} // namespace

TEST_CASE("presets map to the documented architectures") {
    {
        Model m = build_network(preset_config("vae1l"), 1);
        CHECK(m.wiring.config.encoder_depth == 1);
        CHECK(m.wiring.config.decoder_depth == 1);
        CHECK(m.wiring.encoder.skips.empty());
        CHECK(m.wiring.decoder.skips.empty());
    }
    {
        Model m = build_network(preset_config("scvae"), 1);
        CHECK(m.wiring.encoder.skips.size() == 10);   // depth 11: every adjacent pair after the first
        CHECK(m.wiring.decoder.skips.size() == 10);
        for (const auto& e : m.wiring.encoder.skips) {
            CHECK(e.target == e.source + 1);
            CHECK(e.identity());
        }
    }
    {
        Model m = build_network(preset_config("scvae-l"), 1);
        REQUIRE(m.wiring.encoder.skips.size() == 1);
        CHECK(m.wiring.encoder.skips[0].source == 1);
        CHECK(m.wiring.encoder.skips[0].target == 11);
        CHECK(m.wiring.decoder.skips.empty());
    }
    {
        Model m = build_network(preset_config("vae-qpp"), 1);
        CHECK(m.wiring.config.encoder_depth == 11);
        CHECK(m.wiring.config.decoder_depth == 1);
    }
    {
        Model m = build_network(preset_config("vae-ppp", 7), 1);
        CHECK(m.wiring.config.encoder_depth == 1);
        CHECK(m.wiring.config.decoder_depth == 7);
    }
    CHECK_THROWS_AS(preset_config("nope"), config_error);
}

TEST_CASE("long-skip endpoints are validated") {
    NetworkConfig c;
    c.encoder_depth = 5;
    c.skip_encoder = SkipSpec{SkipMode::long_range, 2, 7};
    CHECK_THROWS_AS(c.validate(), config_error);
    c.skip_encoder = SkipSpec{SkipMode::long_range, 3, 4};   // span < 2
    CHECK_THROWS_AS(c.validate(), config_error);
    c.skip_encoder = SkipSpec{SkipMode::long_range, 0, 3};
    CHECK_THROWS_AS(c.validate(), config_error);
    c.skip_encoder = SkipSpec{SkipMode::long_range, 1, 3};
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("parameter store layout is contiguous per side") {
    NetworkConfig c;
    c.encoder_depth = 3;
    c.decoder_depth = 2;
    c.hidden_width = 8;
    c.latent_dim = 4;
    c.data_dim = 10;
    Model m = build_network(c, 9);
    // encoder 3 + heads 2 + decoder 2 + output 1
    CHECK(m.params.entries.size() == 8);
    int enc_next = 1;
    for (int idx : m.layout.encoder_layers) {
        CHECK(m.params.entries[static_cast<size_t>(idx)].side == Side::encoder);
        CHECK(m.params.entries[static_cast<size_t>(idx)].layer == enc_next++);
    }
    CHECK(m.params.entries[static_cast<size_t>(m.layout.head_mu)].side == Side::latent_head);
    // output layer chains after the decoder hiddens
    const auto& out = m.params.entries[static_cast<size_t>(m.layout.decoder_layers.back())];
    CHECK(out.side == Side::decoder);
    CHECK(out.layer == 3);
    CHECK(out.weight.shape[0] == 10);
}

TEST_CASE("encode returns a full hidden trace and is deterministic") {
    NetworkConfig c;
    c.encoder_depth = 4;
    c.decoder_depth = 2;
    c.hidden_width = 16;
    c.latent_dim = 5;
    c.data_dim = 12;
    Model m = build_network(c, 33);
    Rng rng(5);
    Tensor x = random_uniform({3, 12}, rng, 0.0, 1.0);
    EncodeResult a = encode(m, x);
    CHECK(a.hidden_trace.size() == 4);
    CHECK(a.latent.mu.shape == std::vector<int64_t>{3, 5});
    for (double v : a.latent.log_var.data) {
        CHECK(v >= kLogVarClampLo);
        CHECK(v <= kLogVarClampHi);
    }
    EncodeResult b = encode(m, x);
    CHECK(std::memcmp(a.latent.mu.data.data(), b.latent.mu.data.data(),
                      a.latent.mu.data.size() * sizeof(double)) == 0);

    DecodeResult d1 = decode(m, reparameterize(a.latent, Tensor::zeros({3, 5})));
    CHECK(d1.hidden_trace.size() == 2);
}

TEST_CASE("zero latent input with zero biases gives the output-head bias") {
    NetworkConfig c;
    c.decoder_depth = 2;
    c.hidden_width = 6;
    c.latent_dim = 3;
    c.data_dim = 5;
    c.activation = Activation::tanh_fn;
    Model m = build_network(c, 2);
    // zero every decoder weight so each hidden layer outputs tanh(0)=0
    for (int idx : m.layout.decoder_layers) {
        auto& e = m.params.entries[static_cast<size_t>(idx)];
        std::fill(e.weight.data.begin(), e.weight.data.end(), 0.0);
    }
    auto& out_entry = m.params.entries[static_cast<size_t>(m.layout.decoder_layers.back())];
    out_entry.bias.data = {0.1, -0.2, 0.3, -0.4, 0.5};
    DecodeResult res = decode(m, Tensor::zeros({2, 3}));
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 5; ++j) {
            CHECK(res.recon_params.at(i, j) == doctest::Approx(out_entry.bias.data[static_cast<size_t>(j)]));
        }
    }
}

TEST_CASE("reparameterize closed forms") {
    GaussianLatent lat;
    lat.mu = Tensor::matrix(1, 2, {0.7, -1.1});
    lat.log_var = Tensor::zeros({1, 2});
    // eps = 0 -> z = mu
    Tensor z0 = reparameterize(lat, Tensor::zeros({1, 2}));
    CHECK(z0.at(0, 0) == 0.7);
    CHECK(z0.at(0, 1) == -1.1);
    // mu=0, log_var=0, eps=e -> z = e
    GaussianLatent unit;
    unit.mu = Tensor::zeros({1, 2});
    unit.log_var = Tensor::zeros({1, 2});
    Tensor e = Tensor::matrix(1, 2, {0.31, -2.5});
    Tensor z1 = reparameterize(unit, e);
    CHECK(z1.at(0, 0) == doctest::Approx(0.31));
    CHECK(z1.at(0, 1) == doctest::Approx(-2.5));
    // mu=1, log_var=ln 4, eps=1 -> z = 3
    GaussianLatent two;
    two.mu = Tensor::matrix(1, 1, {1.0});
    two.log_var = Tensor::matrix(1, 1, {std::log(4.0)});
    Tensor z2 = reparameterize(two, Tensor::matrix(1, 1, {1.0}));
    CHECK(z2.at(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("KL closed forms and Monte Carlo agreement") {
    NetworkConfig c;
    c.latent_dim = 1;
    c.data_dim = 4;
    Model m = build_network(c, 3);

    Tensor x = Tensor::matrix(1, 4, {0.2, 0.8, 0.5, 0.0});
    Tensor logits = Tensor::matrix(1, 4, {0.0, 0.0, 0.0, 0.0});

    GaussianLatent std_normal;
    std_normal.mu = Tensor::zeros({1, 1});
    std_normal.log_var = Tensor::zeros({1, 1});
    CHECK(elbo(m, x, logits, std_normal).kl == 0.0);   // KL(N(0,I)||N(0,I)) = 0 exactly

    GaussianLatent shifted;
    shifted.mu = Tensor::matrix(1, 1, {1.0});
    shifted.log_var = Tensor::zeros({1, 1});
    CHECK(elbo(m, x, logits, shifted).kl == doctest::Approx(0.5));

    // kl >= 0 and elbo <= reconstruction on random latents
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        GaussianLatent lat;
        lat.mu = random_uniform({1, 1}, rng, -3, 3);
        lat.log_var = random_uniform({1, 1}, rng, -2, 2);
        ElboTerms t = elbo(m, x, logits, lat);
        CHECK(t.kl >= 0.0);
        CHECK(t.elbo <= t.reconstruction);
    }

    // closed form matches a Monte Carlo estimate of E_q[log q - log p], s=5
    Rng mc_rng(99);
    for (int pair = 0; pair < 3; ++pair) {
        const int s = 5;
        std::vector<double> mu(s), lv(s);
        for (auto& v : mu) v = mc_rng.uniform(-2, 2);
        for (auto& v : lv) v = mc_rng.uniform(-1.5, 1.5);
        double closed = 0.0;
        for (int j = 0; j < s; ++j) {
            closed += 0.5 * (mu[j] * mu[j] + std::exp(lv[j]) - lv[j] - 1.0);
        }
        const int n_draws = 200000;
        double mc = 0.0;
        for (int i = 0; i < n_draws; ++i) {
            for (int j = 0; j < s; ++j) {
                const double sd = std::exp(0.5 * lv[j]);
                const double z = mu[j] + sd * mc_rng.gaussian();
                const double log_q = -0.5 * ((z - mu[j]) * (z - mu[j]) / (sd * sd)) - 0.5 * lv[j];
                const double log_p = -0.5 * z * z;
                mc += log_q - log_p;
            }
        }
        mc /= n_draws;
        CHECK(std::fabs(mc - closed) / closed < 0.01);
    }
}

TEST_CASE("elbo rejects pixels outside the unit interval") {
    NetworkConfig c;
    c.data_dim = 2;
    Model m = build_network(c, 3);
    Tensor bad = Tensor::matrix(1, 2, {0.5, 1.5});
    Tensor logits = Tensor::zeros({1, 2});
    GaussianLatent lat;
    lat.mu = Tensor::zeros({1, 50});
    lat.log_var = Tensor::zeros({1, 50});
    CHECK_THROWS_AS(elbo(m, bad, logits, lat), config_error);
}

TEST_CASE("every-layer skip network with zeroed layers reduces to the skip path") {
    // data_dim == hidden_width, skip chain includes the input edge, so with
    // all f outputs forced to zero the network is the identity-composed path
    Rng rng(12);
    const int width = 6;
    std::vector<std::pair<int, int>> pairs;
    for (int l = 1; l <= 3; ++l) pairs.emplace_back(l - 1, l);
    SideWiring side = make_side_wiring(width, {width, width, width}, pairs, rng);
    for (const auto& e : side.skips) CHECK(e.identity());

    Model m;
    NetworkConfig c;
    c.encoder_depth = 3;
    c.decoder_depth = 1;
    c.hidden_width = width;
    c.latent_dim = 2;
    c.data_dim = width;
    m = build_network(c, 8);
    m.wiring.encoder = side;
    for (int idx : m.layout.encoder_layers) {
        auto& e = m.params.entries[static_cast<size_t>(idx)];
        std::fill(e.weight.data.begin(), e.weight.data.end(), 0.0);
        std::fill(e.bias.data.begin(), e.bias.data.end(), 0.0);
    }
    Tensor x = random_uniform({2, width}, rng, 0.0, 1.0);
    EncodeResult res = encode(m, x);
    const Tensor& last = res.hidden_trace.back();
    for (size_t i = 0; i < x.data.size(); ++i) {
        CHECK(last.data[i] == doctest::Approx(x.data[i]));
    }
}

TEST_CASE("width-adapting skip projections are frozen and applied") {
    Rng rng(4);
    // input dim 5 feeding a width-8 layer through a skip needs a projection
    SideWiring side = make_side_wiring(5, {8, 8}, {{0, 2}}, rng);
    REQUIRE(side.skips.size() == 1);
    CHECK_FALSE(side.skips[0].identity());
    CHECK(side.skips[0].projection.shape == std::vector<int64_t>{8, 5});
}

TEST_CASE("gradient flows to encoder layer 1 in a deep skip network") {
    NetworkConfig c = preset_config("scvae");
    c.hidden_width = 12;
    c.latent_dim = 3;
    c.data_dim = 10;
    Model m = build_network(c, 21);
    Rng rng(6);
    Tensor x = random_uniform({4, 10}, rng, 0.0, 1.0);
    Tensor eps = random_gaussian({4, 3}, rng);

    Tape tape;
    BoundParams bp = bind_params(tape, m.params);
    Var xv = tape.constant_view(x);
    LatentVars lat = encode_graph(tape, m, bp, xv);
    Var z = tape.reparameterize(lat.mu, lat.log_var, tape.constant_view(eps));
    Var recon = decode_graph(tape, m, bp, z);
    ElboVars ev = elbo_graph(tape, m, xv, recon, lat);
    tape.backward(ev.neg_elbo);

    const int first = m.layout.encoder_layers.front();
    double norm = 0.0;
    for (double g : tape.grad(bp.weights[static_cast<size_t>(first)])) norm += g * g;
    CHECK(norm > 0.0);
}

TEST_CASE("importance-weighted log-likelihood upper-bounds the elbo estimate") {
    // tiny model: s=2, d=4 synthetic input; IW estimate with S=5000 must sit
    // above the ELBO within Monte Carlo error
    NetworkConfig c;
    c.encoder_depth = 1;
    c.decoder_depth = 1;
    c.hidden_width = 8;
    c.latent_dim = 2;
    c.data_dim = 4;
    Model m = build_network(c, 44);
    Tensor x = Tensor::matrix(1, 4, {1.0, 0.0, 1.0, 0.0});

    EncodeResult enc = encode(m, x);
    Rng rng(1234);
    const int s_draws = 5000;
    // per-draw log weight; its mean estimates the ELBO, logsumexp the IW bound
    std::vector<double> log_w(s_draws);
    for (int i = 0; i < s_draws; ++i) {
        Tensor eps = random_gaussian({1, 2}, rng);
        Tensor z = reparameterize(enc.latent, eps);
        DecodeResult dec = decode(m, z);
        double recon = 0.0;
        for (int64_t j = 0; j < 4; ++j) {
            recon += x.at(0, j) * dec.recon_params.at(0, j) - softplus(dec.recon_params.at(0, j));
        }
        double log_p = 0.0, log_q = 0.0;
        for (int64_t j = 0; j < 2; ++j) {
            log_p += -0.5 * z.at(0, j) * z.at(0, j);
            log_q += -0.5 * (eps.at(0, j) * eps.at(0, j) + enc.latent.log_var.at(0, j));
        }
        log_w[static_cast<size_t>(i)] = recon + log_p - log_q;
    }
    double mean_lw = 0.0, max_lw = -1e300;
    for (double lw : log_w) {
        mean_lw += lw;
        max_lw = std::max(max_lw, lw);
    }
    mean_lw /= s_draws;
    double var = 0.0, sum_exp = 0.0;
    for (double lw : log_w) {
        var += (lw - mean_lw) * (lw - mean_lw);
        sum_exp += std::exp(lw - max_lw);
    }
    var /= (s_draws - 1);
    const double stderr_mean = std::sqrt(var / s_draws);
    const double iw = max_lw + std::log(sum_exp / s_draws);
    CHECK(iw >= mean_lw - 3.0 * stderr_mean);
}
