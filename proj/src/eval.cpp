#include "scvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "scvae/errors.hpp"
#include "scvae/rng.hpp"

namespace scvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int64_t kEncodeChunk = 2000;

} // namespace

GaussianLatent encode_dataset(const Model& model, const Tensor& images) {
    const int64_t n = images.rows();
    const int64_t s = model.wiring.config.latent_dim;
    GaussianLatent out;
    out.mu = Tensor::zeros({n, s});
    out.log_var = Tensor::zeros({n, s});
    for (int64_t start = 0; start < n; start += kEncodeChunk) {
        const int64_t stop = std::min(n, start + kEncodeChunk);
        std::vector<int64_t> idx(static_cast<size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor chunk = gather_rows(images, idx);
        EncodeResult enc = encode(model, chunk);
        std::copy_n(enc.latent.mu.data.begin(), (stop - start) * s,
                    out.mu.data.begin() + start * s);
        std::copy_n(enc.latent.log_var.data.begin(), (stop - start) * s,
                    out.log_var.data.begin() + start * s);
    }
    return out;
}

double estimate_nll(const Model& model, const Tensor& images, int S, uint64_t seed) {
    if (S < 1) throw usage_error("estimate_nll: S must be >= 1");
    const int64_t n = images.rows();
    const int64_t sdim = model.wiring.config.latent_dim;
    const bool bernoulli = model.wiring.config.likelihood == Likelihood::bernoulli;

    const GaussianLatent lat = encode_dataset(model, images);

    std::vector<double> run_max(static_cast<size_t>(n), -std::numeric_limits<double>::infinity());
    std::vector<double> run_sum(static_cast<size_t>(n), 0.0);

    Rng rng(mix_seed(seed, 0x1371));
    Tensor eps = Tensor::zeros({n, sdim});
    Tensor z = Tensor::zeros({n, sdim});

    for (int s = 0; s < S; ++s) {
        for (auto& v : eps.data) v = rng.gaussian();
        for (size_t i = 0; i < z.data.size(); ++i) {
            z.data[i] = lat.mu.data[i] + std::exp(0.5 * lat.log_var.data[i]) * eps.data[i];
        }
        for (int64_t start = 0; start < n; start += kEncodeChunk) {
            const int64_t stop = std::min(n, start + kEncodeChunk);
            std::vector<int64_t> idx(static_cast<size_t>(stop - start));
            std::iota(idx.begin(), idx.end(), start);
            Tensor z_chunk = gather_rows(z, idx);
            DecodeResult dec = decode(model, z_chunk);
            const int64_t d = images.cols();
            for (int64_t i = start; i < stop; ++i) {
                const double* logits = dec.recon_params.data.data() + (i - start) * d;
                const double* x = images.data.data() + i * d;
                double recon = 0.0;
                if (bernoulli) {
                    for (int64_t j = 0; j < d; ++j) recon += x[j] * logits[j] - softplus(logits[j]);
                } else {
                    recon = -0.5 * static_cast<double>(d) * kLog2Pi;
                    for (int64_t j = 0; j < d; ++j) {
                        const double r = x[j] - logits[j];
                        recon -= 0.5 * r * r;
                    }
                }
                // log p(z) - log q(z|x); the q term simplifies against eps
                double log_p = -0.5 * static_cast<double>(sdim) * kLog2Pi;
                double log_q = -0.5 * static_cast<double>(sdim) * kLog2Pi;
                const double* zi = z.data.data() + i * sdim;
                const double* ei = eps.data.data() + i * sdim;
                const double* lvi = lat.log_var.data.data() + i * sdim;
                for (int64_t j = 0; j < sdim; ++j) {
                    log_p -= 0.5 * zi[j] * zi[j];
                    log_q -= 0.5 * (ei[j] * ei[j] + lvi[j]);
                }
                const double lw = recon + log_p - log_q;
                if (!std::isfinite(lw)) {
                    throw numeric_error("estimate_nll: non-finite log-weight at image " +
                                        std::to_string(i) + ", sample " + std::to_string(s));
                }
                auto& mx = run_max[static_cast<size_t>(i)];
                auto& sm = run_sum[static_cast<size_t>(i)];
                if (lw > mx) {
                    sm = sm * std::exp(mx - lw) + 1.0;
                    mx = lw;
                } else {
                    sm += std::exp(lw - mx);
                }
            }
        }
    }

    double total = 0.0;
    const double log_s = std::log(static_cast<double>(S));
    for (int64_t i = 0; i < n; ++i) {
        total += -(run_max[static_cast<size_t>(i)] + std::log(run_sum[static_cast<size_t>(i)]) - log_s);
    }
    return total / static_cast<double>(n);
}

double latent_classify(const Tensor& train_latents, std::span<const uint8_t> train_labels,
                       const Tensor& test_latents, std::span<const uint8_t> test_labels,
                       int epochs, uint64_t seed) {
    const int64_t n = train_latents.rows();
    const int64_t d = train_latents.cols();
    if (n != static_cast<int64_t>(train_labels.size()) ||
        test_latents.rows() != static_cast<int64_t>(test_labels.size())) {
        throw usage_error("latent_classify: latents/labels row mismatch");
    }
    if (epochs < 1) throw usage_error("latent_classify: epochs must be >= 1");

    std::set<uint8_t> train_classes(train_labels.begin(), train_labels.end());
    for (uint8_t l : test_labels) {
        if (!train_classes.count(l)) {
            throw usage_error("latent_classify: class " + std::to_string(l) +
                              " absent from training labels");
        }
    }
    std::vector<uint8_t> classes(train_classes.begin(), train_classes.end());
    const size_t n_classes = classes.size();
    std::vector<int> class_of(256, -1);
    for (size_t c = 0; c < n_classes; ++c) class_of[classes[c]] = static_cast<int>(c);

    // standardize features on the training statistics
    std::vector<double> mean(static_cast<size_t>(d), 0.0), inv_std(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += train_latents.at(i, j);
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            const double r = train_latents.at(i, j) - mean[static_cast<size_t>(j)];
            inv_std[static_cast<size_t>(j)] += r * r;
        }
    }
    for (auto& v : inv_std) {
        const double sd = std::sqrt(v / static_cast<double>(n));
        v = sd > 1e-12 ? 1.0 / sd : 0.0;   // constant features drop out
    }

    auto feature = [&](const Tensor& latents, int64_t row, std::vector<double>& x) {
        for (int64_t j = 0; j < d; ++j) {
            x[static_cast<size_t>(j)] =
                (latents.at(row, j) - mean[static_cast<size_t>(j)]) * inv_std[static_cast<size_t>(j)];
        }
        x[static_cast<size_t>(d)] = 1.0;   // bias feature
    };

    // hinge subgradient descent with a bounded-start decaying step; the
    // 1/(lambda t) tail keeps the Pegasos asymptotics without the huge
    // first steps
    const double lambda = 1e-4;
    const double eta0 = 0.5;
    std::vector<std::vector<double>> w(n_classes, std::vector<double>(static_cast<size_t>(d + 1), 0.0));
    Rng rng(mix_seed(seed, 0xc1a5));
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> x(static_cast<size_t>(d + 1));
    int64_t t = 0;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (int64_t row : order) {
            t += 1;
            const double eta = eta0 / (1.0 + eta0 * lambda * static_cast<double>(t));
            feature(train_latents, row, x);
            const int y_class = class_of[train_labels[static_cast<size_t>(row)]];
            for (size_t c = 0; c < n_classes; ++c) {
                const double y = static_cast<int>(c) == y_class ? 1.0 : -1.0;
                double score = 0.0;
                for (size_t j = 0; j < x.size(); ++j) score += w[c][j] * x[j];
                const double shrink = 1.0 - eta * lambda;
                if (y * score < 1.0) {
                    for (size_t j = 0; j < x.size(); ++j) w[c][j] = shrink * w[c][j] + eta * y * x[j];
                } else {
                    for (size_t j = 0; j < x.size(); ++j) w[c][j] = shrink * w[c][j];
                }
            }
        }
    }

    int64_t correct = 0;
    for (int64_t i = 0; i < test_latents.rows(); ++i) {
        feature(test_latents, i, x);
        size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < n_classes; ++c) {
            double score = 0.0;
            for (size_t j = 0; j < x.size(); ++j) score += w[c][j] * x[j];
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (classes[best] == test_labels[static_cast<size_t>(i)]) correct += 1;
    }
    return static_cast<double>(correct) / static_cast<double>(test_latents.rows());
}

void export_latents(const Model& model, const Tensor& images, std::span<const uint8_t> labels,
                    const std::string& path) {
    if (images.rows() != static_cast<int64_t>(labels.size())) {
        throw usage_error("export_latents: images/labels row mismatch");
    }
    const GaussianLatent lat = encode_dataset(model, images);
    const int64_t s = lat.mu.cols();
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << "label";
    for (int64_t j = 1; j <= s; ++j) out << ",mu_" << j;
    for (int64_t j = 1; j <= s; ++j) out << ",logvar_" << j;
    out << "\n";
    char buf[64];
    for (int64_t i = 0; i < images.rows(); ++i) {
        out << static_cast<int>(labels[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < s; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", lat.mu.at(i, j));
            out << buf;
        }
        for (int64_t j = 0; j < s; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", lat.log_var.at(i, j));
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw io_error("failed writing latents to '" + path + "'");
}

LatentCsv read_latents_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw config_error("latents CSV: empty file");
    int64_t s = 0;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) {
            if (col.rfind("mu_", 0) == 0) s += 1;
        }
    }
    LatentCsv csv;
    std::vector<double> mu_vals, lv_vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        csv.labels.push_back(static_cast<uint8_t>(std::stoi(cell)));
        for (int64_t j = 0; j < s; ++j) {
            std::getline(ss, cell, ',');
            mu_vals.push_back(std::stod(cell));
        }
        for (int64_t j = 0; j < s; ++j) {
            std::getline(ss, cell, ',');
            lv_vals.push_back(std::stod(cell));
        }
    }
    const int64_t n = static_cast<int64_t>(csv.labels.size());
    csv.mu = Tensor({n, s}, std::move(mu_vals));
    csv.log_var = Tensor({n, s}, std::move(lv_vals));
    return csv;
}

void write_metrics_file(const std::string& path, const EvalMetrics& m, const std::string& preset,
                        uint64_t seed, int epochs) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    char buf[256];
    out << "{\n";
    std::snprintf(buf, sizeof(buf), "  \"nll\": %.17g,\n", m.nll);
    out << buf;
    std::snprintf(buf, sizeof(buf), "  \"accuracy\": %.17g,\n", m.accuracy);
    out << buf;
    out << "  \"preset\": \"" << preset << "\",\n";
    out << "  \"seed\": " << seed << ",\n";
    out << "  \"epochs\": " << epochs << ",\n";
    out << "  \"S\": " << m.n_importance_samples << "\n";
    out << "}\n";
    if (!out) throw io_error("failed writing metrics to '" + path + "'");
}

} // namespace scvae
