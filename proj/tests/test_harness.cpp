#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "scvae/checkpoint.hpp"
#include "scvae/config.hpp"
#include "scvae/errors.hpp"
#include "scvae/harness.hpp"
#include "scvae/trainer.hpp"

using namespace scvae;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

// small-but-real training setup that runs in under a second
std::string desk_config(const std::string& out_dir, const std::string& extra = "") {
    return "dataset = synth\n"
           "synth_classes = 3\n"
           "synth_per_class = 50\n"
           "synth_dim = 12\n"
           "encoder_depth = 1\n"
           "decoder_depth = 1\n"
           "hidden_width = 16\n"
           "latent_dim = 3\n"
           "epochs = 3\n"
           "batch_size = 25\n"
           "seed = 1\n"
           "eval_samples = 5\n"
           "classifier_epochs = 5\n"
           "output_dir = " + out_dir + "\n" + extra;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// runlog lines with the wall-clock field removed
std::string runlog_without_wall(const std::string& path) {
    std::ifstream in(path);
    std::string line, out;
    while (std::getline(in, line)) {
        const size_t at = line.find(",\"wall_s\"");
        out += line.substr(0, at) + "\n";
    }
    return out;
}

} // namespace

TEST_CASE("config parsing accepts presets with synth defaults") {
    RunConfig cfg = parse_run_config("preset = scvae\ndataset = synth\n");
    CHECK(cfg.preset == "scvae");
    CHECK(cfg.dataset == "synth");
    CHECK(cfg.synth.classes == 4);
    CHECK(cfg.synth.dim == 64);
    CHECK(cfg.batch_size == 100);
    NetworkConfig net = cfg.resolved_network();
    CHECK(net.encoder_depth == 11);
    CHECK(net.skip_encoder.mode == SkipMode::every_layer);
    CHECK(net.data_dim == 64);
    CHECK(cfg.resolved_run_id() == "scvae_s1");
}

TEST_CASE("config errors name the offending line") {
    try {
        parse_run_config("dataset = synth\nepochs = -3\n");
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    try {
        parse_run_config("dataset = synth\nnot_a_key = 1\n");
        FAIL("expected config_error");
    } catch (const config_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("not_a_key") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_run_config(""), config_error);                  // dataset required
    CHECK_THROWS_AS(parse_run_config("# only a comment\n"), config_error);
    CHECK_THROWS_AS(parse_run_config("dataset = mnist\n"), config_error); // needs mnist_dir
    CHECK_THROWS_AS(parse_run_config("preset = scvae\nencoder_depth = 3\ndataset = synth\n"),
                    config_error);
    CHECK_THROWS_AS(parse_run_config("dataset = synth\nskip_encoder = sideways\n"), config_error);
    RunConfig ok = parse_run_config("dataset = synth\nskip_encoder = long:1:5\nencoder_depth = 5\n");
    CHECK(ok.network.skip_encoder.mode == SkipMode::long_range);
    CHECK(ok.network.skip_encoder.from == 1);
    CHECK(ok.network.skip_encoder.to == 5);
}

TEST_CASE("checkpoint bytes follow the SCV1 layout and round-trip") {
    NetworkConfig c;
    c.encoder_depth = 1;
    c.decoder_depth = 1;
    c.hidden_width = 3;
    c.latent_dim = 2;
    c.data_dim = 4;
    Model m = build_network(c, 77);
    TempDir dir("scvae_ckpt_test");
    const std::string path = dir.str() + "/model.scv1";
    save_checkpoint(path, m.params);

    const std::string bytes = read_bytes(path);
    REQUIRE(bytes.size() > 4);
    CHECK(bytes.compare(0, 4, "SCV1") == 0);
    // first record: encoder layer 1 weight [3 x 4]
    uint32_t layer = 0, rank = 0, d0 = 0, d1 = 0;
    std::memcpy(&layer, bytes.data() + 4, 4);
    const uint8_t side = static_cast<uint8_t>(bytes[8]);
    std::memcpy(&rank, bytes.data() + 9, 4);
    std::memcpy(&d0, bytes.data() + 13, 4);
    std::memcpy(&d1, bytes.data() + 17, 4);
    CHECK(layer == 1);
    CHECK(side == 0);
    CHECK(rank == 2);
    CHECK(d0 == 3);
    CHECK(d1 == 4);
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 21, 8);
    CHECK(first == m.params.entries[0].weight.data[0]);

    ParamStore loaded = load_checkpoint(path);
    check_params_match(loaded, m.params);
    for (size_t i = 0; i < loaded.entries.size(); ++i) {
        CHECK(std::memcmp(loaded.entries[i].weight.data.data(),
                          m.params.entries[i].weight.data.data(),
                          loaded.entries[i].weight.data.size() * sizeof(double)) == 0);
    }

    // architecture mismatch is detected
    c.hidden_width = 4;
    Model other = build_network(c, 77);
    CHECK_THROWS_AS(check_params_match(loaded, other.params), config_error);

    // not a checkpoint
    const std::string junk = dir.str() + "/junk.bin";
    std::ofstream(junk) << "whatever";
    CHECK_THROWS_AS(load_checkpoint(junk), config_error);
}

TEST_CASE("training improves the elbo and logs every epoch") {
    TempDir dir("scvae_train_test");
    RunConfig cfg = parse_run_config(desk_config(dir.str(), "epochs = 5\nrun_id = sanity\n"));
    RunLog log = train(cfg);
    REQUIRE(log.epochs.size() == 5);
    CHECK(log.epochs.back().train_elbo > log.epochs.front().train_elbo);
    CHECK(log.has_metrics);
    CHECK(log.metrics.nll > 0.0);
    CHECK(fs::exists(log.artifacts.checkpoint));
    CHECK(fs::exists(log.artifacts.best_checkpoint));
    CHECK(fs::exists(log.artifacts.metrics));
    CHECK(fs::exists(log.artifacts.runlog));
    for (size_t i = 1; i < log.epochs.size(); ++i) {
        CHECK(log.epochs[i].epoch == log.epochs[i - 1].epoch + 1);
    }
}

TEST_CASE("fisher probes run at init plus every interval epoch") {
    TempDir dir("scvae_probe_test");
    RunConfig cfg = parse_run_config(desk_config(dir.str(), "fisher_interval = 1\nrun_id = probes\n"));
    RunLog log = train(cfg);   // epochs = 3
    REQUIRE(log.fisher_reports.size() == 4);
    CHECK(log.fisher_reports[0].epoch == 0);
    CHECK(log.fisher_reports[3].epoch == 3);
    const auto reports = read_fisher_csv(log.artifacts.fisher_csv);
    CHECK(reports.size() == 4);
}

TEST_CASE("identical config and seed reproduce every artifact") {
    TempDir dir_a("scvae_det_a");
    TempDir dir_b("scvae_det_b");
    RunConfig a = parse_run_config(desk_config(dir_a.str(), "run_id = det\n"));
    RunConfig b = parse_run_config(desk_config(dir_b.str(), "run_id = det\n"));
    RunLog la = train(a);
    RunLog lb = train(b);
    REQUIRE(la.epochs.size() == lb.epochs.size());
    for (size_t i = 0; i < la.epochs.size(); ++i) {
        CHECK(la.epochs[i].train_elbo == lb.epochs[i].train_elbo);
        CHECK(la.epochs[i].val_elbo == lb.epochs[i].val_elbo);
    }
    CHECK(la.metrics.nll == lb.metrics.nll);
    CHECK(la.metrics.accuracy == lb.metrics.accuracy);
    CHECK(read_bytes(la.artifacts.checkpoint) == read_bytes(lb.artifacts.checkpoint));
    CHECK(read_bytes(la.artifacts.best_checkpoint) == read_bytes(lb.artifacts.best_checkpoint));
    CHECK(read_bytes(la.artifacts.fisher_csv) == read_bytes(lb.artifacts.fisher_csv));
    CHECK(read_bytes(la.artifacts.metrics) == read_bytes(lb.artifacts.metrics));
    // runlogs agree on everything except wall-clock timings
    CHECK(runlog_without_wall(la.artifacts.runlog) == runlog_without_wall(lb.artifacts.runlog));
}

TEST_CASE("interrupted runs resume to the exact uninterrupted result") {
    TempDir dir_full("scvae_resume_full");
    TempDir dir_part("scvae_resume_part");
    RunConfig full = parse_run_config(desk_config(dir_full.str(), "epochs = 4\nrun_id = r\n"));
    RunLog log_full = train(full);

    RunConfig part1 = parse_run_config(desk_config(dir_part.str(), "epochs = 2\nrun_id = r\n"));
    train(part1);
    RunConfig part2 = parse_run_config(
        desk_config(dir_part.str(), "epochs = 4\nrun_id = r\nresume = true\n"));
    RunLog log_resumed = train(part2);

    REQUIRE(log_resumed.epochs.size() == 4);
    CHECK(read_bytes(log_full.artifacts.checkpoint) == read_bytes(log_resumed.artifacts.checkpoint));
    CHECK(read_bytes(log_full.artifacts.fisher_csv) == read_bytes(log_resumed.artifacts.fisher_csv));
    CHECK(log_full.metrics.nll == log_resumed.metrics.nll);
    CHECK(log_full.metrics.accuracy == log_resumed.metrics.accuracy);
    CHECK(runlog_without_wall(log_full.artifacts.runlog) ==
          runlog_without_wall(log_resumed.artifacts.runlog));
}

TEST_CASE("numeric failure mid-run names the batch and preserves artifacts") {
    TempDir dir("scvae_abort_test");
    RunConfig good = parse_run_config(desk_config(dir.str(), "epochs = 2\nrun_id = r\n"));
    train(good);
    const std::string ckpt_bytes = read_bytes(run_artifact_paths(good).checkpoint);

    RunConfig bad = parse_run_config(desk_config(
        dir.str(), "epochs = 4\nrun_id = r\nresume = true\nlearning_rate = 1e308\n"));
    try {
        train(bad);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 3") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
        CHECK(msg.find("checkpoint") != std::string::npos);
    }
    // the epoch-2 snapshot is still intact and resumable
    CHECK(read_bytes(run_artifact_paths(good).checkpoint) == ckpt_bytes);
    Model probe = build_network(good.resolved_network(), good.seed);
    TrainState st = load_train_state(run_artifact_paths(good).train_state, probe.params);
    CHECK(st.epoch == 2);
}

TEST_CASE("depth-1 sweep emits one row per combination with matching fisher") {
    TempDir dir("scvae_sweep_test");
    RunConfig cfg = parse_run_config(desk_config(dir.str(),
        "sweep_depths = 1\nsweep_skips = none,every_layer\nseeds = 1\nfisher_interval = 3\n"));
    const auto rows = run_depth_sweep(cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].skip_mode == "none");
    CHECK(rows[1].skip_mode == "every_layer");
    // depth 1 has no skippable layers: identical architecture, identical FI
    CHECK(rows[0].overall_mean == rows[1].overall_mean);
    CHECK(fs::exists(dir.path / "sweep.csv"));

    // aligned reports: gain of skip-vs-plain at depth 1 is exactly zero
    SkipGainTable gain = skip_gain(rows[1].final_report, rows[0].final_report);
    CHECK(gain.overall_mean_gain == 0.0);
}

TEST_CASE("table1 trains each requested preset and renders means") {
    TempDir dir("scvae_table_test");
    RunConfig cfg = parse_run_config(desk_config(dir.str(),
        "preset_depth = 3\nseeds = 7\ntable1_presets = vae1l,scvae\n"));
    Table1Result result = run_table1(cfg);
    REQUIRE(result.rows.size() == 2);
    CHECK(result.rows[0].preset == "vae1l");
    CHECK(result.rows[1].preset == "scvae");
    CHECK(result.rendered.find("vae1l") != std::string::npos);
    CHECK(result.rendered.find("scvae") != std::string::npos);
    CHECK(fs::exists(dir.path / "table1.csv"));
    CHECK(fs::exists(dir.path / "table1.txt"));
}
