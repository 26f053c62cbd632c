// Command-line front end: training runs, checkpoint evaluation, Fisher
// probes, depth sweeps, the preset comparison table, latent export, and
// synthetic dataset generation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "scvae/checkpoint.hpp"
#include "scvae/config.hpp"
#include "scvae/data_io.hpp"
#include "scvae/errors.hpp"
#include "scvae/eval.hpp"
#include "scvae/fisher.hpp"
#include "scvae/harness.hpp"
#include "scvae/trainer.hpp"

using namespace scvae;

namespace {

namespace fs = std::filesystem;

Model load_model_for(const RunConfig& cfg, const std::string& checkpoint_path) {
    Model model = build_network(cfg.resolved_network(), cfg.seed);
    ParamStore params = load_checkpoint(checkpoint_path);
    check_params_match(params, model.params);
    model.params = std::move(params);
    return model;
}

int cmd_train(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    RunLog log = train(cfg);
    std::printf("run %s: %d epochs", log.run_id.c_str(), cfg.epochs);
    if (!log.epochs.empty()) {
        std::printf(", final train elbo %.3f, val elbo %.3f", log.epochs.back().train_elbo,
                    log.epochs.back().val_elbo);
    }
    std::printf("\nnll %.4f  accuracy %.4f\n", log.metrics.nll, log.metrics.accuracy);
    std::printf("checkpoint: %s\n", log.artifacts.checkpoint.c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const Model model = load_model_for(cfg, checkpoint_path);
    const DatasetSplit data = load_dataset(cfg);

    EvalMetrics metrics;
    metrics.n_importance_samples = cfg.eval_samples;
    metrics.classifier_epochs = cfg.classifier_epochs;
    metrics.nll = estimate_nll(model, data.test_images, cfg.eval_samples,
                               mix_seed(cfg.seed, (1ull << 40) + 1));
    const GaussianLatent train_lat = encode_dataset(model, data.train_images);
    const GaussianLatent test_lat = encode_dataset(model, data.test_images);
    metrics.accuracy = latent_classify(train_lat.mu, data.train_labels, test_lat.mu,
                                       data.test_labels, cfg.classifier_epochs,
                                       mix_seed(cfg.seed, (1ull << 40) + 2));

    fs::create_directories(cfg.output_dir);
    const std::string path = cfg.output_dir + "/metrics_" + cfg.resolved_run_id() + ".json";
    write_metrics_file(path, metrics, cfg.preset.empty() ? "custom" : cfg.preset, cfg.seed,
                       cfg.epochs);
    std::printf("nll %.4f  accuracy %.4f  (S=%d)\n", metrics.nll, metrics.accuracy,
                metrics.n_importance_samples);
    std::printf("metrics: %s\n", path.c_str());
    return 0;
}

int cmd_fisher(const std::string& checkpoint_path, const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const Model model = load_model_for(cfg, checkpoint_path);
    const DatasetSplit data = load_dataset(cfg);
    const NetworkConfig net = cfg.resolved_network();
    const ProbeBatch probe = make_probe_batch(data, net.latent_dim, cfg.seed);

    int epoch = 0;
    const std::string state_path = checkpoint_path.substr(0, checkpoint_path.rfind('.')) + ".state";
    if (fs::exists(state_path)) {
        Model fresh = build_network(net, cfg.seed);
        epoch = load_train_state(state_path, fresh.params).epoch;
    }

    FisherOptions opts;
    opts.allow_small_batch = probe.x.rows() < 32;
    const FisherReport report =
        layer_fisher(model, probe.x, probe.eps, cfg.resolved_run_id(), epoch, opts);

    fs::create_directories(cfg.output_dir);
    const std::string path = cfg.output_dir + "/fisher_" + cfg.resolved_run_id() + "_probe.csv";
    fs::remove(path);
    append_fisher_csv(path, report);

    std::printf("per-layer Fisher (probe batch %lld rows)\n",
                static_cast<long long>(probe.x.rows()));
    for (const auto& rec : report.records) {
        std::printf("  %-12s layer %2d  fisher %.6e  grad_sq_norm %.6e%s\n", side_name(rec.side),
                    rec.layer, rec.fisher, rec.grad_sq_norm, rec.zero_grad ? "  [zero]" : "");
    }
    std::printf("means: encoder %.6e  decoder %.6e  overall %.6e\n", report.encoder_mean,
                report.decoder_mean, report.overall_mean);

    const RecurrenceDiagnostic diag = recurrence_check(report);
    std::printf("recurrence: %zu ratio pairs, %zu skipped, monotone-decay rate %.3f\n",
                diag.pairs.size(), diag.skipped.size(), diag.monotone_decay_rate);
    std::printf("csv: %s\n", path.c_str());
    return 0;
}

int cmd_sweep(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const auto rows = run_depth_sweep(cfg);
    std::printf("%zu sweep rows written to %s/sweep.csv\n", rows.size(), cfg.output_dir.c_str());
    return 0;
}

int cmd_table1(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const Table1Result result = run_table1(cfg);
    std::printf("%s", result.rendered.c_str());
    std::printf("rows: %s/table1.csv\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_export_latents(const std::string& checkpoint_path, const std::string& config_path,
                       const std::string& out_csv) {
    const RunConfig cfg = load_run_config(config_path);
    const Model model = load_model_for(cfg, checkpoint_path);
    const DatasetSplit data = load_dataset(cfg);
    export_latents(model, data.test_images, data.test_labels, out_csv);
    std::printf("wrote %lld latent rows to %s\n", static_cast<long long>(data.test_images.rows()),
                out_csv.c_str());
    return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    const RunConfig cfg = load_run_config(config_path);
    const DatasetSplit data =
        synth_dataset(cfg.seed, cfg.synth.per_class, cfg.synth.classes, cfg.synth.dim);
    fs::create_directories(out_dir);

    // pick the most square factorization for the IDX image dims
    int rows = 1;
    for (int r = 1; r * r <= cfg.synth.dim; ++r) {
        if (cfg.synth.dim % r == 0) rows = r;
    }
    const int cols = cfg.synth.dim / rows;

    auto dump = [&](const Tensor& images, std::span<const uint8_t> labels, const std::string& stem) {
        const auto img_bytes = write_idx_images(images, rows, cols);
        write_file(out_dir + "/" + stem + "-images-idx3-ubyte", img_bytes);
        const auto lbl_bytes = write_idx_labels(labels);
        write_file(out_dir + "/" + stem + "-labels-idx1-ubyte", lbl_bytes);
    };
    dump(data.train_images, data.train_labels, "train");
    dump(data.val_images, data.val_labels, "val");
    dump(data.test_images, data.test_labels, "test");
    std::printf("synth dataset (%d classes, dim %d): %lld/%lld/%lld rows under %s\n",
                cfg.synth.classes, cfg.synth.dim,
                static_cast<long long>(data.train_images.rows()),
                static_cast<long long>(data.val_images.rows()),
                static_cast<long long>(data.test_images.rows()), out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"skip-connected VAE training and layer-wise Fisher Information probes"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_path;

    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("config", config_path, "config file")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate NLL and latent accuracy of a checkpoint");
    eval_cmd->add_option("checkpoint", checkpoint_path, "SCV1 checkpoint")->required();
    eval_cmd->add_option("config", config_path, "config file")->required();

    auto* fisher_cmd = app.add_subcommand("fisher", "layer-wise Fisher probe of a checkpoint");
    fisher_cmd->add_option("checkpoint", checkpoint_path, "SCV1 checkpoint")->required();
    fisher_cmd->add_option("config", config_path, "config file")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "depth x skip-mode sweep");
    sweep_cmd->add_option("config", config_path, "config file")->required();

    auto* table_cmd = app.add_subcommand("table1", "preset comparison table");
    table_cmd->add_option("config", config_path, "config file")->required();

    auto* export_cmd = app.add_subcommand("export-latents", "write test-set latent codes as CSV");
    export_cmd->add_option("checkpoint", checkpoint_path, "SCV1 checkpoint")->required();
    export_cmd->add_option("config", config_path, "config file")->required();
    export_cmd->add_option("out", out_path, "output CSV path")->required();

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset as IDX files");
    synth_cmd->add_option("config", config_path, "config file")->required();
    synth_cmd->add_option("out_dir", out_path, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(config_path);
        if (eval_cmd->parsed()) return cmd_eval(checkpoint_path, config_path);
        if (fisher_cmd->parsed()) return cmd_fisher(checkpoint_path, config_path);
        if (sweep_cmd->parsed()) return cmd_sweep(config_path);
        if (table_cmd->parsed()) return cmd_table1(config_path);
        if (export_cmd->parsed()) return cmd_export_latents(checkpoint_path, config_path, out_path);
        if (synth_cmd->parsed()) return cmd_synth(config_path, out_path);
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
