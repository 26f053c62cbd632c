#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scvae/errors.hpp"
#include "scvae/eval.hpp"
#include "scvae/rng.hpp"

using namespace scvae;

namespace {

Tensor random_uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Model tiny_model(uint64_t seed) {
    NetworkConfig c;
    c.encoder_depth = 1;
    c.decoder_depth = 1;
    c.hidden_width = 8;
    c.latent_dim = 2;
    c.data_dim = 6;
    return build_network(c, seed);
}

} // namespace

TEST_CASE("separable clouds classify perfectly") {
    Rng rng(3);
    Tensor train = Tensor::zeros({80, 2});
    std::vector<uint8_t> train_labels(80);
    Tensor test = Tensor::zeros({40, 2});
    std::vector<uint8_t> test_labels(40);
    auto fill = [&](Tensor& t, std::vector<uint8_t>& labels) {
        for (int64_t i = 0; i < t.rows(); ++i) {
            const bool hi = i % 2 == 0;
            labels[static_cast<size_t>(i)] = hi ? 1 : 0;
            t.at(i, 0) = (hi ? 3.0 : -3.0) + rng.uniform(-0.5, 0.5);
            t.at(i, 1) = (hi ? 2.0 : -2.0) + rng.uniform(-0.5, 0.5);
        }
    };
    fill(train, train_labels);
    fill(test, test_labels);
    CHECK(latent_classify(train, train_labels, test, test_labels, 30, 7) == 1.0);
}

TEST_CASE("uniformly shuffled labels score at chance level") {
    Rng rng(5);
    Tensor train = random_uniform({1500, 8}, rng, -1, 1);
    Tensor test = random_uniform({1000, 8}, rng, -1, 1);
    std::vector<uint8_t> train_labels(1500), test_labels(1000);
    for (auto& l : train_labels) l = static_cast<uint8_t>(rng.below(10));
    for (auto& l : test_labels) l = static_cast<uint8_t>(rng.below(10));
    const double acc = latent_classify(train, train_labels, test, test_labels, 10, 2);
    CHECK(std::fabs(acc - 0.1) <= 0.03);
}

TEST_CASE("collapsed constant latents fall back to the majority class") {
    Tensor train = Tensor::zeros({100, 3});
    Tensor test = Tensor::zeros({60, 3});
    for (auto& v : train.data) v = 0.7;
    for (auto& v : test.data) v = 0.7;
    std::vector<uint8_t> train_labels(100), test_labels(60);
    for (size_t i = 0; i < train_labels.size(); ++i) train_labels[i] = i % 10 < 6 ? 2 : (i % 3);
    int majority_hits = 0;
    for (size_t i = 0; i < test_labels.size(); ++i) {
        test_labels[i] = i % 10 < 5 ? 2 : (i % 3);
        if (test_labels[i] == 2) ++majority_hits;
    }
    const double acc = latent_classify(train, train_labels, test, test_labels, 10, 3);
    CHECK(acc == doctest::Approx(static_cast<double>(majority_hits) / 60.0));
}

TEST_CASE("class absent from training labels is a usage error") {
    Tensor train = Tensor::zeros({4, 2});
    Tensor test = Tensor::zeros({2, 2});
    std::vector<uint8_t> train_labels = {0, 0, 1, 1};
    std::vector<uint8_t> test_labels = {0, 7};
    CHECK_THROWS_AS(latent_classify(train, train_labels, test, test_labels, 5, 1), usage_error);
}

TEST_CASE("classifier accuracy is deterministic in the seed") {
    Rng rng(9);
    Tensor train = random_uniform({200, 4}, rng, -1, 1);
    Tensor test = random_uniform({100, 4}, rng, -1, 1);
    std::vector<uint8_t> train_labels(200), test_labels(100);
    for (size_t i = 0; i < train_labels.size(); ++i) train_labels[i] = train.at(static_cast<int64_t>(i), 0) > 0 ? 1 : 0;
    for (size_t i = 0; i < test_labels.size(); ++i) test_labels[i] = test.at(static_cast<int64_t>(i), 0) > 0 ? 1 : 0;
    const double a = latent_classify(train, train_labels, test, test_labels, 15, 11);
    const double b = latent_classify(train, train_labels, test, test_labels, 15, 11);
    CHECK(a == b);
}

TEST_CASE("S=1 estimate equals the single-sample bound recomputed by hand") {
    Model m = tiny_model(17);
    Rng rng(2);
    Tensor images = random_uniform({5, 6}, rng, 0.0, 1.0);
    const uint64_t seed = 31;
    const double nll = estimate_nll(m, images, 1, seed);

    // independent recomputation: same eps stream, hand-rolled densities
    GaussianLatent lat = encode_dataset(m, images);
    Rng eps_rng(mix_seed(seed, 0x1371));
    Tensor eps = Tensor::zeros({5, 2});
    for (auto& v : eps.data) v = eps_rng.gaussian();
    Tensor z = reparameterize(lat, eps);
    DecodeResult dec = decode(m, z);
    const double log2pi = std::log(2.0 * 3.14159265358979323846);
    double total = 0.0;
    for (int64_t i = 0; i < 5; ++i) {
        double recon = 0.0;
        for (int64_t j = 0; j < 6; ++j) {
            const double y = dec.recon_params.at(i, j);
            recon += images.at(i, j) * y - (std::max(y, 0.0) + std::log1p(std::exp(-std::fabs(y))));
        }
        double log_p = -log2pi, log_q = -log2pi;
        for (int64_t j = 0; j < 2; ++j) {
            log_p -= 0.5 * z.at(i, j) * z.at(i, j);
            const double sd2 = std::exp(lat.log_var.at(i, j));
            log_q -= 0.5 * ((z.at(i, j) - lat.mu.at(i, j)) * (z.at(i, j) - lat.mu.at(i, j)) / sd2 +
                            lat.log_var.at(i, j));
        }
        total += -(recon + log_p - log_q);
    }
    CHECK(nll == doctest::Approx(total / 5.0).epsilon(1e-12));
}

TEST_CASE("more importance samples tighten the bound statistically") {
    Model m = tiny_model(23);
    Rng rng(8);
    Tensor images = random_uniform({30, 6}, rng, 0.0, 1.0);
    std::vector<double> nll_1, nll_100;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        nll_1.push_back(estimate_nll(m, images, 1, seed));
        nll_100.push_back(estimate_nll(m, images, 100, seed));
    }
    double m1 = 0.0, m100 = 0.0;
    for (double v : nll_1) m1 += v;
    for (double v : nll_100) m100 += v;
    m1 /= 5.0;
    m100 /= 5.0;
    double var1 = 0.0;
    for (double v : nll_1) var1 += (v - m1) * (v - m1);
    const double se1 = std::sqrt(var1 / 4.0 / 5.0);
    CHECK(m100 <= m1 + 2.0 * se1);
}

TEST_CASE("non-finite log-weights raise a numeric error naming the sample") {
    Model m = tiny_model(29);
    // saturate the output head so the Bernoulli log-likelihood overflows
    auto& out = m.params.entries[static_cast<size_t>(m.layout.decoder_layers.back())];
    std::fill(out.bias.data.begin(), out.bias.data.end(), 1.7e308);
    Tensor images = Tensor::zeros({2, 6});
    for (auto& v : images.data) v = 0.5;
    try {
        estimate_nll(m, images, 1, 3);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("image") != std::string::npos);
    }
}

TEST_CASE("latent export writes shaped and reproducible CSVs") {
    Model m = tiny_model(41);
    Rng rng(6);
    Tensor images = random_uniform({3, 6}, rng, 0.0, 1.0);
    std::vector<uint8_t> labels = {0, 1, 2};

    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "scvae_latents_test.csv").string();
    export_latents(m, images, labels, path);

    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "label,mu_1,mu_2,logvar_1,logvar_2");
    int rows = 0;
    int cols = 0;
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        ++rows;
        cols = 1 + static_cast<int>(std::count(row.begin(), row.end(), ','));
    }
    CHECK(rows == 3);
    CHECK(cols == 5);
    in.close();

    // re-export: bitwise identical file
    std::ifstream first(path, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(first)), std::istreambuf_iterator<char>());
    first.close();
    export_latents(m, images, labels, path);
    std::ifstream second(path, std::ios::binary);
    std::string bytes_b((std::istreambuf_iterator<char>(second)), std::istreambuf_iterator<char>());
    second.close();
    CHECK(bytes_a == bytes_b);
    fs::remove(path);
}

TEST_CASE("exported latents reclassify to the same accuracy") {
    Model m = tiny_model(53);
    Rng rng(12);
    Tensor train_imgs = random_uniform({60, 6}, rng, 0.0, 1.0);
    Tensor test_imgs = random_uniform({30, 6}, rng, 0.0, 1.0);
    std::vector<uint8_t> train_labels(60), test_labels(30);
    for (size_t i = 0; i < train_labels.size(); ++i) train_labels[i] = i % 3;
    for (size_t i = 0; i < test_labels.size(); ++i) test_labels[i] = i % 3;

    const GaussianLatent train_lat = encode_dataset(m, train_imgs);
    const GaussianLatent test_lat = encode_dataset(m, test_imgs);
    const double direct =
        latent_classify(train_lat.mu, train_labels, test_lat.mu, test_labels, 10, 4);

    namespace fs = std::filesystem;
    const std::string tr = (fs::temp_directory_path() / "scvae_lat_train.csv").string();
    const std::string te = (fs::temp_directory_path() / "scvae_lat_test.csv").string();
    export_latents(m, train_imgs, train_labels, tr);
    export_latents(m, test_imgs, test_labels, te);
    LatentCsv train_csv = read_latents_csv(tr);
    LatentCsv test_csv = read_latents_csv(te);
    fs::remove(tr);
    fs::remove(te);

    const double roundtrip =
        latent_classify(train_csv.mu, train_csv.labels, test_csv.mu, test_csv.labels, 10, 4);
    CHECK(roundtrip == direct);
}
