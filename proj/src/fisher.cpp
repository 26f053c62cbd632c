#include "scvae/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scvae/errors.hpp"

namespace scvae {

std::vector<double> mean_squared_group_scores(
    int n_samples, const std::function<ProbeGraph(Tape&, int)>& build) {
    if (n_samples < 1) throw usage_error("mean_squared_group_scores: need at least one sample");

    std::vector<std::vector<double>> per_sample(static_cast<size_t>(n_samples));

#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < n_samples; ++s) {
        Tape tape;
        ProbeGraph pg = build(tape, s);
        tape.backward(pg.loss);
        std::vector<double> ssq(pg.groups.size(), 0.0);
        for (size_t g = 0; g < pg.groups.size(); ++g) {
            for (Var v : pg.groups[g]) {
                for (double gv : tape.grad(v)) ssq[g] += gv * gv;
            }
        }
        per_sample[static_cast<size_t>(s)] = std::move(ssq);
    }

    // reduce in ascending sample order
    std::vector<double> acc(per_sample[0].size(), 0.0);
    for (int s = 0; s < n_samples; ++s) {
        const auto& ssq = per_sample[static_cast<size_t>(s)];
        if (ssq.size() != acc.size()) throw usage_error("probe build produced inconsistent groups");
        for (size_t g = 0; g < acc.size(); ++g) acc[g] += ssq[g];
    }
    const double inv = 1.0 / static_cast<double>(n_samples);
    for (double& v : acc) v *= inv;
    return acc;
}

namespace {

struct SideTotals {
    double ssq = 0.0;
    int64_t params = 0;
    double mean() const { return params > 0 ? ssq / static_cast<double>(params) : 0.0; }
};

} // namespace

FisherReport layer_fisher(const Model& model, const Tensor& batch, const Tensor& eps,
                          const std::string& run_id, int epoch, const FisherOptions& opts) {
    const int64_t b = batch.rows();
    if (b < 32 && !opts.allow_small_batch) {
        throw usage_error("layer_fisher: batch size " + std::to_string(b) +
                          " is below the minimum of 32");
    }
    if (eps.rows() != b || eps.cols() != model.wiring.config.latent_dim) {
        throw usage_error("layer_fisher: eps must be [batch x latent_dim]");
    }

    FisherReport report;
    report.run_id = run_id;
    report.epoch = epoch;
    report.records.reserve(model.params.entries.size());
    for (const auto& e : model.params.entries) {
        FisherRecord rec;
        rec.side = e.side;
        rec.layer = e.layer;
        rec.param_count = e.weight.numel() + e.bias.numel();
        report.records.push_back(rec);
    }

    // full-batch pass for the per-layer gradient norms
    {
        Tape tape;
        BoundParams bp = bind_params(tape, model.params);
        Var xv = tape.constant_view(batch);
        Var ev = tape.constant_view(eps);
        LatentVars lat = encode_graph(tape, model, bp, xv);
        Var z = tape.reparameterize(lat.mu, lat.log_var, ev);
        Var recon = decode_graph(tape, model, bp, z);
        ElboVars elbo_v = elbo_graph(tape, model, xv, recon, lat);
        Var loss = opts.loss_scale == 1.0 ? elbo_v.neg_elbo : tape.scale(elbo_v.neg_elbo, opts.loss_scale);
        tape.backward(loss);
        for (size_t i = 0; i < model.params.entries.size(); ++i) {
            double ssq = 0.0;
            for (double g : tape.grad(bp.weights[i])) ssq += g * g;
            for (double g : tape.grad(bp.biases[i])) ssq += g * g;
            report.records[i].grad_sq_norm = ssq;
        }
    }

    // per-sample squared scores
    const auto scores = mean_squared_group_scores(
        static_cast<int>(b), [&](Tape& tape, int s) {
            const int64_t idx[1] = {s};
            Var xv = tape.constant(gather_rows(batch, idx));
            Var ev = tape.constant(gather_rows(eps, idx));
            BoundParams bp = bind_params(tape, model.params);
            LatentVars lat = encode_graph(tape, model, bp, xv);
            Var z = tape.reparameterize(lat.mu, lat.log_var, ev);
            Var recon = decode_graph(tape, model, bp, z);
            ElboVars elbo_v = elbo_graph(tape, model, xv, recon, lat);
            ProbeGraph pg;
            pg.loss = opts.loss_scale == 1.0 ? elbo_v.neg_elbo
                                             : tape.scale(elbo_v.neg_elbo, opts.loss_scale);
            pg.groups.reserve(model.params.entries.size());
            for (size_t i = 0; i < model.params.entries.size(); ++i) {
                pg.groups.push_back({bp.weights[i], bp.biases[i]});
            }
            return pg;
        });

    SideTotals enc, dec, all;
    for (size_t i = 0; i < report.records.size(); ++i) {
        auto& rec = report.records[i];
        rec.fisher = scores[i] / static_cast<double>(rec.param_count);
        rec.zero_grad = rec.fisher == 0.0;
        const double ssq = scores[i];
        all.ssq += ssq;
        all.params += rec.param_count;
        if (rec.side == Side::encoder) {
            enc.ssq += ssq;
            enc.params += rec.param_count;
        } else if (rec.side == Side::decoder) {
            dec.ssq += ssq;
            dec.params += rec.param_count;
        }
    }
    report.encoder_mean = enc.mean();
    report.decoder_mean = dec.mean();
    report.overall_mean = all.mean();
    return report;
}

namespace {

const FisherRecord* find_record(const FisherReport& r, Side side, int layer) {
    for (const auto& rec : r.records) {
        if (rec.side == side && rec.layer == layer) return &rec;
    }
    return nullptr;
}

int side_chain_length(const FisherReport& r, Side side) {
    int n = 0;
    for (const auto& rec : r.records) {
        if (rec.side == side) n = std::max(n, rec.layer);
    }
    return n;
}

} // namespace

RecurrenceDiagnostic recurrence_check(const FisherReport& report) {
    RecurrenceDiagnostic diag;
    int decaying = 0;
    for (Side side : {Side::encoder, Side::decoder}) {
        const int chain = side_chain_length(report, side);
        for (int l = 1; l < chain; ++l) {
            const FisherRecord* lo = find_record(report, side, l);
            const FisherRecord* hi = find_record(report, side, l + 1);
            if (!lo || !hi) continue;
            diag.total_adjacent_pairs += 1;
            if (hi->fisher <= lo->fisher) decaying += 1;
            if (lo->fisher == 0.0 || lo->grad_sq_norm == 0.0) {
                diag.skipped.emplace_back(side, l);
                continue;
            }
            RecurrencePair pair;
            pair.side = side;
            pair.layer_lo = l;
            pair.measured = hi->fisher / lo->fisher;
            // Eq.-style prediction from full-batch gradients, aggregated as
            // per-parameter squared norms so that a single-sample batch makes
            // it coincide with the measured ratio.
            const double lo_norm = lo->grad_sq_norm / static_cast<double>(lo->param_count);
            const double hi_norm = hi->grad_sq_norm / static_cast<double>(hi->param_count);
            pair.predicted = hi_norm / lo_norm;
            const double denom = std::max({std::fabs(pair.measured), std::fabs(pair.predicted), 1e-300});
            pair.rel_discrepancy = std::fabs(pair.measured - pair.predicted) / denom;
            diag.pairs.push_back(pair);
        }
    }
    diag.monotone_decay_rate = diag.total_adjacent_pairs > 0
        ? static_cast<double>(decaying) / static_cast<double>(diag.total_adjacent_pairs)
        : 0.0;
    return diag;
}

SkipGainTable skip_gain(const FisherReport& with_skips, const FisherReport& plain) {
    if (with_skips.records.size() != plain.records.size()) {
        throw usage_error("skip_gain: reports have different layer counts (" +
                          std::to_string(with_skips.records.size()) + " vs " +
                          std::to_string(plain.records.size()) + ")");
    }
    SkipGainTable table;
    for (size_t i = 0; i < with_skips.records.size(); ++i) {
        const auto& a = with_skips.records[i];
        const auto& b = plain.records[i];
        if (a.side != b.side || a.layer != b.layer || a.param_count != b.param_count) {
            throw usage_error("skip_gain: misaligned layer at position " + std::to_string(i) +
                              " (" + std::string(side_name(a.side)) + " " + std::to_string(a.layer) +
                              " vs " + std::string(side_name(b.side)) + " " + std::to_string(b.layer) + ")");
        }
        table.rows.push_back(GainRow{a.side, a.layer, a.fisher - b.fisher});
    }
    table.encoder_mean_gain = with_skips.encoder_mean - plain.encoder_mean;
    table.decoder_mean_gain = with_skips.decoder_mean - plain.decoder_mean;
    table.overall_mean_gain = with_skips.overall_mean - plain.overall_mean;
    return table;
}

void append_fisher_csv(const std::string& path, const FisherReport& report) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    if (fresh) out << "run_id,epoch,side,layer,fisher,grad_sq_norm,param_count\n";
    char buf[512];
    for (const auto& rec : report.records) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%s,%d,%.17g,%.17g,%lld\n",
                      report.run_id.c_str(), report.epoch, side_name(rec.side), rec.layer,
                      rec.fisher, rec.grad_sq_norm, static_cast<long long>(rec.param_count));
        out << buf;
    }
    if (!out) throw io_error("failed writing fisher CSV to '" + path + "'");
}

std::vector<FisherReport> read_fisher_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);  // header
    std::vector<FisherReport> reports;
    auto side_from = [](const std::string& s) {
        if (s == "encoder") return Side::encoder;
        if (s == "decoder") return Side::decoder;
        if (s == "latent-head") return Side::latent_head;
        throw io_error("fisher CSV: unknown side '" + s + "'");
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string run_id, epoch_s, side_s, layer_s, fisher_s, gsn_s, pc_s;
        std::getline(ss, run_id, ',');
        std::getline(ss, epoch_s, ',');
        std::getline(ss, side_s, ',');
        std::getline(ss, layer_s, ',');
        std::getline(ss, fisher_s, ',');
        std::getline(ss, gsn_s, ',');
        std::getline(ss, pc_s, ',');
        const int epoch = std::stoi(epoch_s);
        if (reports.empty() || reports.back().epoch != epoch || reports.back().run_id != run_id) {
            FisherReport r;
            r.run_id = run_id;
            r.epoch = epoch;
            reports.push_back(r);
        }
        FisherRecord rec;
        rec.side = side_from(side_s);
        rec.layer = std::stoi(layer_s);
        rec.fisher = std::stod(fisher_s);
        rec.grad_sq_norm = std::stod(gsn_s);
        rec.param_count = std::stoll(pc_s);
        rec.zero_grad = rec.fisher == 0.0;
        reports.back().records.push_back(rec);
    }
    // recompute the means for each parsed report
    for (auto& r : reports) {
        SideTotals enc, dec, all;
        for (const auto& rec : r.records) {
            const double ssq = rec.fisher * static_cast<double>(rec.param_count);
            all.ssq += ssq;
            all.params += rec.param_count;
            if (rec.side == Side::encoder) {
                enc.ssq += ssq;
                enc.params += rec.param_count;
            } else if (rec.side == Side::decoder) {
                dec.ssq += ssq;
                dec.params += rec.param_count;
            }
        }
        r.encoder_mean = enc.mean();
        r.decoder_mean = dec.mean();
        r.overall_mean = all.mean();
    }
    return reports;
}

} // namespace scvae
