#include "scvae/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "scvae/checkpoint.hpp"
#include "scvae/errors.hpp"

namespace scvae {

namespace {

// End-of-training Fisher report: the last probe if it hit the final epoch,
// otherwise a fresh probe of the final checkpoint.
FisherReport final_fisher(const RunConfig& cfg, const RunLog& log) {
    if (!log.fisher_reports.empty() && log.fisher_reports.back().epoch == cfg.epochs) {
        return log.fisher_reports.back();
    }
    const NetworkConfig net = cfg.resolved_network();
    Model model = build_network(net, cfg.seed);
    ParamStore params = load_checkpoint(log.artifacts.checkpoint);
    check_params_match(params, model.params);
    model.params = std::move(params);
    const DatasetSplit data = load_dataset(cfg);
    const ProbeBatch probe = make_probe_batch(data, net.latent_dim, cfg.seed);
    FisherOptions opts;
    opts.allow_small_batch = probe.x.rows() < 32;
    return layer_fisher(model, probe.x, probe.eps, log.run_id, cfg.epochs, opts);
}

} // namespace

std::vector<SweepRow> run_depth_sweep(const RunConfig& base) {
    if (base.sweep_depths.empty()) throw config_error("sweep: depths must be nonempty");
    std::vector<SweepRow> rows;
    for (int depth : base.sweep_depths) {
        for (const std::string& mode : base.sweep_skips) {
            for (uint64_t seed : base.seeds) {
                RunConfig cfg = base;
                cfg.preset.clear();
                cfg.explicit_arch = true;
                cfg.network.encoder_depth = depth;
                cfg.network.decoder_depth = depth;
                const SkipSpec spec = mode == "every_layer"
                                          ? SkipSpec{SkipMode::every_layer, 0, 0}
                                          : SkipSpec{};
                cfg.network.skip_encoder = spec;
                cfg.network.skip_decoder = spec;
                cfg.seed = seed;
                cfg.run_id = "sweep_d" + std::to_string(depth) + "_" + mode + "_s" +
                             std::to_string(seed);
                RunLog log = train(cfg);

                SweepRow row;
                row.depth = depth;
                row.skip_mode = mode;
                row.seed = seed;
                row.final_report = final_fisher(cfg, log);
                row.encoder_mean = row.final_report.encoder_mean;
                row.decoder_mean = row.final_report.decoder_mean;
                row.overall_mean = row.final_report.overall_mean;
                row.nll = log.metrics.nll;
                row.accuracy = log.metrics.accuracy;
                rows.push_back(std::move(row));
            }
        }
    }

    const std::string path = base.output_dir + "/sweep.csv";
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << "depth,skip_mode,seed,encoder_mean_fi,decoder_mean_fi,overall_mean_fi,nll,accuracy\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%llu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.depth,
                      r.skip_mode.c_str(), static_cast<unsigned long long>(r.seed), r.encoder_mean,
                      r.decoder_mean, r.overall_mean, r.nll, r.accuracy);
        out << buf;
    }
    if (!out) throw io_error("failed writing '" + path + "'");
    return rows;
}

Table1Result run_table1(const RunConfig& base) {
    std::vector<std::string> presets =
        base.table1_presets.empty() ? preset_names() : base.table1_presets;

    Table1Result result;
    for (const std::string& preset : presets) {
        for (uint64_t seed : base.seeds) {
            RunConfig cfg = base;
            cfg.preset = preset;
            cfg.explicit_arch = false;
            cfg.seed = seed;
            cfg.run_id = preset + "_s" + std::to_string(seed);
            RunLog log = train(cfg);
            result.rows.push_back(Table1Row{preset, seed, log.metrics.nll, log.metrics.accuracy});
        }
    }

    const std::string csv_path = base.output_dir + "/table1.csv";
    {
        std::ofstream out(csv_path);
        if (!out) throw io_error("cannot open '" + csv_path + "' for writing");
        out << "preset,seed,nll,accuracy\n";
        char buf[256];
        for (const auto& r : result.rows) {
            std::snprintf(buf, sizeof(buf), "%s,%llu,%.17g,%.17g\n", r.preset.c_str(),
                          static_cast<unsigned long long>(r.seed), r.nll, r.accuracy);
            out << buf;
        }
    }

    // per-preset means, rendered in preset order
    std::ostringstream table;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %5s %12s %10s\n", "model", "runs", "NLL", "Acc");
    table << buf;
    for (const std::string& preset : presets) {
        double nll = 0.0, acc = 0.0;
        int n = 0;
        for (const auto& r : result.rows) {
            if (r.preset != preset) continue;
            nll += r.nll;
            acc += r.accuracy;
            n += 1;
        }
        if (n == 0) continue;
        std::snprintf(buf, sizeof(buf), "%-10s %5d %12.2f %10.4f\n", preset.c_str(), n,
                      nll / n, acc / n);
        table << buf;
    }
    result.rendered = table.str();

    const std::string txt_path = base.output_dir + "/table1.txt";
    std::ofstream out(txt_path);
    if (!out) throw io_error("cannot open '" + txt_path + "' for writing");
    out << result.rendered;
    return result;
}

} // namespace scvae
