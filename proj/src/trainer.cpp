#include "scvae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "scvae/adam.hpp"
#include "scvae/checkpoint.hpp"
#include "scvae/errors.hpp"
#include "scvae/rng.hpp"

namespace scvae {

namespace {

namespace fs = std::filesystem;

// seed-stream tags: per-epoch train stream 2e, per-epoch validation 2e+1,
// probe and eval streams well away from the epoch range
constexpr uint64_t kProbeTag = 1ull << 40;
constexpr uint64_t kNllTag = (1ull << 40) + 1;
constexpr uint64_t kClassifierTag = (1ull << 40) + 2;

Tensor gaussian_tensor(int64_t rows, int64_t cols, Rng& rng) {
    Tensor t = Tensor::zeros({rows, cols});
    for (auto& v : t.data) v = rng.gaussian();
    return t;
}

struct BatchResult {
    double elbo = 0.0;
};

// One forward/backward on a batch; gradients are accumulated into the
// parameter tensors. When update is false only the forward value is used.
BatchResult run_batch(Model& model, const Tensor& x, const Tensor& eps, bool with_grads) {
    Tape tape;
    BoundParams bp = bind_params(tape, model.params);
    Var xv = tape.constant_view(x);
    Var ev = tape.constant_view(eps);
    LatentVars lat = encode_graph(tape, model, bp, xv);
    Var z = tape.reparameterize(lat.mu, lat.log_var, ev);
    Var recon = decode_graph(tape, model, bp, z);
    ElboVars elbo_v = elbo_graph(tape, model, xv, recon, lat);
    BatchResult res;
    res.elbo = tape.data(elbo_v.elbo_mean)[0];
    if (with_grads) {
        tape.backward(elbo_v.neg_elbo);
        for (size_t i = 0; i < model.params.entries.size(); ++i) {
            auto& e = model.params.entries[i];
            e.weight.ensure_grad();
            e.bias.ensure_grad();
            auto gw = tape.grad(bp.weights[i]);
            auto gb = tape.grad(bp.biases[i]);
            for (size_t j = 0; j < gw.size(); ++j) e.weight.grad[j] += gw[j];
            for (size_t j = 0; j < gb.size(); ++j) e.bias.grad[j] += gb[j];
        }
    }
    return res;
}

double dataset_elbo(Model& model, const Tensor& images, int batch_size, Rng& rng) {
    const int64_t n = images.rows();
    const int64_t s = model.wiring.config.latent_dim;
    double total = 0.0;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t stop = std::min(n, start + batch_size);
        std::vector<int64_t> idx(static_cast<size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = gather_rows(images, idx);
        Tensor eps = gaussian_tensor(stop - start, s, rng);
        total += run_batch(model, x, eps, false).elbo * static_cast<double>(stop - start);
    }
    return total / static_cast<double>(n);
}

void append_runlog_line(const std::string& path, const EpochRecord& rec) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%d,\"train_elbo\":%.17g,\"val_elbo\":%.17g,\"wall_s\":%.3f}\n",
                  rec.epoch, rec.train_elbo, rec.val_elbo, rec.wall_seconds);
    out << buf;
}

std::vector<EpochRecord> read_runlog(const std::string& path) {
    std::vector<EpochRecord> records;
    std::ifstream in(path);
    if (!in) return records;
    std::string line;
    auto field = [](const std::string& l, const char* key) {
        const std::string pat = std::string("\"") + key + "\":";
        const size_t at = l.find(pat);
        if (at == std::string::npos) throw config_error("runlog: missing field " + std::string(key));
        return std::stod(l.substr(at + pat.size()));
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRecord rec;
        rec.epoch = static_cast<int>(field(line, "epoch"));
        rec.train_elbo = field(line, "train_elbo");
        rec.val_elbo = field(line, "val_elbo");
        rec.wall_seconds = field(line, "wall_s");
        records.push_back(rec);
    }
    return records;
}

} // namespace

RunArtifacts run_artifact_paths(const RunConfig& cfg) {
    const std::string id = cfg.resolved_run_id();
    RunArtifacts a;
    a.checkpoint = cfg.output_dir + "/ckpt_" + id + ".scv1";
    a.best_checkpoint = cfg.output_dir + "/ckpt_" + id + "_best.scv1";
    a.train_state = cfg.output_dir + "/ckpt_" + id + ".state";
    a.fisher_csv = cfg.output_dir + "/fisher_" + id + ".csv";
    a.metrics = cfg.output_dir + "/metrics_" + id + ".json";
    a.runlog = cfg.output_dir + "/runlog_" + id + ".jsonl";
    return a;
}

DatasetSplit load_dataset(const RunConfig& cfg) {
    if (cfg.dataset == "mnist") return load_mnist_dir(cfg.mnist_dir);
    if (cfg.dataset == "synth") {
        return synth_dataset(cfg.seed, cfg.synth.per_class, cfg.synth.classes, cfg.synth.dim);
    }
    throw config_error("unknown dataset '" + cfg.dataset + "'");
}

ProbeBatch make_probe_batch(const DatasetSplit& data, int latent_dim, uint64_t seed) {
    const int64_t n = std::min<int64_t>(1024, data.val_images.rows());
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    ProbeBatch probe;
    probe.x = gather_rows(data.val_images, idx);
    Rng rng(mix_seed(seed, kProbeTag));
    probe.eps = gaussian_tensor(n, latent_dim, rng);
    return probe;
}

RunLog train(const RunConfig& cfg) {
    const NetworkConfig net = cfg.resolved_network();
    const DatasetSplit data = load_dataset(cfg);
    if (data.dim() != net.data_dim) {
        throw config_error("dataset dimension " + std::to_string(data.dim()) +
                           " does not match the configured data_dim " +
                           std::to_string(net.data_dim));
    }
    if (net.likelihood == Likelihood::bernoulli) {
        check_pixel_range(data.train_images);
    }

    fs::create_directories(cfg.output_dir);
    RunLog log;
    log.run_id = cfg.resolved_run_id();
    log.artifacts = run_artifact_paths(cfg);

    Model model = build_network(net, cfg.seed);
    TrainState state;
    state.optimizer = make_optimizer_state(model.params, cfg.learning_rate);
    state.best_val_elbo = -std::numeric_limits<double>::infinity();

    const bool resuming = cfg.resume && fs::exists(log.artifacts.checkpoint) &&
                          fs::exists(log.artifacts.train_state);
    if (resuming) {
        ParamStore loaded = load_checkpoint(log.artifacts.checkpoint);
        check_params_match(loaded, model.params);
        model.params = std::move(loaded);
        state = load_train_state(log.artifacts.train_state, model.params);
        state.optimizer.learning_rate = cfg.learning_rate;
        log.epochs = read_runlog(log.artifacts.runlog);
        {
            const size_t before = log.epochs.size();
            while (!log.epochs.empty() && log.epochs.back().epoch > state.epoch) log.epochs.pop_back();
            if (log.epochs.size() != before) {
                fs::remove(log.artifacts.runlog);
                for (const auto& rec : log.epochs) append_runlog_line(log.artifacts.runlog, rec);
            }
        }
        if (fs::exists(log.artifacts.fisher_csv)) {
            log.fisher_reports = read_fisher_csv(log.artifacts.fisher_csv);
            // drop probe rows past the resume point (possible if a crash hit
            // between the probe append and the state save)
            const size_t before = log.fisher_reports.size();
            while (!log.fisher_reports.empty() && log.fisher_reports.back().epoch > state.epoch) {
                log.fisher_reports.pop_back();
            }
            if (log.fisher_reports.size() != before) {
                fs::remove(log.artifacts.fisher_csv);
                for (const auto& r : log.fisher_reports) {
                    append_fisher_csv(log.artifacts.fisher_csv, r);
                }
            }
        }
    } else {
        // fresh run: drop stale append-mode artifacts
        fs::remove(log.artifacts.fisher_csv);
        fs::remove(log.artifacts.runlog);
        fs::remove(log.artifacts.best_checkpoint);
    }

    const ProbeBatch probe = make_probe_batch(data, net.latent_dim, cfg.seed);
    auto run_probe = [&](int epoch) {
        FisherOptions opts;
        opts.allow_small_batch = probe.x.rows() < 32;   // tiny validation sets still probe
        FisherReport report = layer_fisher(model, probe.x, probe.eps, log.run_id, epoch, opts);
        append_fisher_csv(log.artifacts.fisher_csv, report);
        log.fisher_reports.push_back(std::move(report));
    };

    if (cfg.fisher_interval > 0 && !resuming) run_probe(0);

    const int64_t n_train = data.train_images.rows();
    std::vector<int64_t> order(static_cast<size_t>(n_train));

    for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng epoch_rng(mix_seed(cfg.seed, 2ull * static_cast<uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), 0);
        epoch_rng.shuffle(order);

        double elbo_sum = 0.0;
        for (int64_t start = 0; start < n_train; start += cfg.batch_size) {
            const int64_t stop = std::min(n_train, start + cfg.batch_size);
            std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(stop - start));
            Tensor x = gather_rows(data.train_images, idx);
            Tensor eps = gaussian_tensor(stop - start, net.latent_dim, epoch_rng);
            // on any numeric failure the artifacts on disk are the last
            // epoch-boundary snapshot; abort without touching them
            try {
                BatchResult res = run_batch(model, x, eps, true);
                if (!std::isfinite(res.elbo)) throw numeric_error("training loss is non-finite");
                adam_step(model.params, state.optimizer);
                elbo_sum += res.elbo * static_cast<double>(stop - start);
            } catch (const numeric_error& e) {
                model.params.clear_grads();
                throw numeric_error(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(start / cfg.batch_size) +
                                    "; last checkpoint preserved at " + log.artifacts.checkpoint + ")");
            }
        }

        Rng val_rng(mix_seed(cfg.seed, 2ull * static_cast<uint64_t>(epoch) + 1));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_elbo = elbo_sum / static_cast<double>(n_train);
        rec.val_elbo = dataset_elbo(model, data.val_images, cfg.batch_size, val_rng);

        if (cfg.fisher_interval > 0 && epoch % cfg.fisher_interval == 0) run_probe(epoch);

        save_checkpoint(log.artifacts.checkpoint, model.params);
        if (rec.val_elbo > state.best_val_elbo) {
            state.best_val_elbo = rec.val_elbo;
            state.has_best = true;
            save_checkpoint(log.artifacts.best_checkpoint, model.params);
        }
        state.epoch = epoch;
        save_train_state(log.artifacts.train_state, state);

        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        append_runlog_line(log.artifacts.runlog, rec);
        log.epochs.push_back(rec);
    }

    // final metrics from the best-validation parameters
    Model eval_model = model;
    if (state.has_best && fs::exists(log.artifacts.best_checkpoint)) {
        ParamStore best = load_checkpoint(log.artifacts.best_checkpoint);
        check_params_match(best, eval_model.params);
        eval_model.params = std::move(best);
    }
    EvalMetrics metrics;
    metrics.n_importance_samples = cfg.eval_samples;
    metrics.classifier_epochs = cfg.classifier_epochs;
    metrics.nll = estimate_nll(eval_model, data.test_images, cfg.eval_samples,
                               mix_seed(cfg.seed, kNllTag));
    const GaussianLatent train_lat = encode_dataset(eval_model, data.train_images);
    const GaussianLatent test_lat = encode_dataset(eval_model, data.test_images);
    metrics.accuracy = latent_classify(train_lat.mu, data.train_labels, test_lat.mu,
                                       data.test_labels, cfg.classifier_epochs,
                                       mix_seed(cfg.seed, kClassifierTag));
    log.metrics = metrics;
    log.has_metrics = true;
    write_metrics_file(log.artifacts.metrics, metrics,
                       cfg.preset.empty() ? "custom" : cfg.preset, cfg.seed, cfg.epochs);
    return log;
}

} // namespace scvae
