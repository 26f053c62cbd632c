#include "scvae/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "scvae/errors.hpp"

namespace scvae {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw config_error("config line " + std::to_string(line) + ": " + msg);
}

int64_t parse_int(const std::string& v, int line, const std::string& key) {
    try {
        size_t pos = 0;
        const int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        fail(line, "cannot parse integer for '" + key + "': '" + v + "'");
    }
}

double parse_real(const std::string& v, int line, const std::string& key) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        fail(line, "cannot parse number for '" + key + "': '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(line, "cannot parse boolean for '" + key + "': '" + v + "'");
}

SkipSpec parse_skip(const std::string& v, int line) {
    if (v == "none") return SkipSpec{};
    if (v == "every_layer") return SkipSpec{SkipMode::every_layer, 0, 0};
    if (v.rfind("long:", 0) == 0) {
        const size_t second = v.find(':', 5);
        if (second == std::string::npos) fail(line, "long skip needs 'long:FROM:TO'");
        SkipSpec spec;
        spec.mode = SkipMode::long_range;
        spec.from = static_cast<int>(parse_int(v.substr(5, second - 5), line, "skip"));
        spec.to = static_cast<int>(parse_int(v.substr(second + 1), line, "skip"));
        return spec;
    }
    fail(line, "unknown skip mode '" + v + "' (expected none|every_layer|long:FROM:TO)");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    bool saw_dataset = false;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (val.empty()) fail(line_no, "empty value for '" + key + "'");

        if (key == "preset") {
            if (!is_preset_name(val)) fail(line_no, "unknown preset '" + val + "'");
            cfg.preset = val;
        } else if (key == "encoder_depth") {
            cfg.network.encoder_depth = static_cast<int>(parse_int(val, line_no, key));
            cfg.explicit_arch = true;
            if (cfg.network.encoder_depth < 1) fail(line_no, "encoder_depth must be >= 1");
        } else if (key == "decoder_depth") {
            cfg.network.decoder_depth = static_cast<int>(parse_int(val, line_no, key));
            cfg.explicit_arch = true;
            if (cfg.network.decoder_depth < 1) fail(line_no, "decoder_depth must be >= 1");
        } else if (key == "hidden_width") {
            cfg.network.hidden_width = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.network.hidden_width < 1) fail(line_no, "hidden_width must be >= 1");
        } else if (key == "latent_dim") {
            cfg.network.latent_dim = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.network.latent_dim < 1) fail(line_no, "latent_dim must be >= 1");
        } else if (key == "activation") {
            try {
                cfg.network.activation = activation_from_string(val);
            } catch (const config_error& e) {
                fail(line_no, e.what());
            }
        } else if (key == "likelihood") {
            try {
                cfg.network.likelihood = likelihood_from_string(val);
            } catch (const config_error& e) {
                fail(line_no, e.what());
            }
        } else if (key == "skip_encoder") {
            cfg.network.skip_encoder = parse_skip(val, line_no);
            cfg.explicit_arch = true;
        } else if (key == "skip_decoder") {
            cfg.network.skip_decoder = parse_skip(val, line_no);
            cfg.explicit_arch = true;
        } else if (key == "dataset") {
            if (val != "mnist" && val != "synth") fail(line_no, "dataset must be mnist or synth");
            cfg.dataset = val;
            saw_dataset = true;
        } else if (key == "mnist_dir") {
            cfg.mnist_dir = val;
        } else if (key == "synth_classes") {
            cfg.synth.classes = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.synth.classes < 1 || cfg.synth.classes > 10) fail(line_no, "synth_classes must be 1..10");
        } else if (key == "synth_per_class") {
            cfg.synth.per_class = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.synth.per_class < 1) fail(line_no, "synth_per_class must be >= 1");
        } else if (key == "synth_dim") {
            cfg.synth.dim = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.synth.dim < 2) fail(line_no, "synth_dim must be >= 2");
        } else if (key == "epochs") {
            cfg.epochs = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.epochs < 1) fail(line_no, "epochs must be >= 1");
        } else if (key == "batch_size") {
            cfg.batch_size = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.batch_size < 1) fail(line_no, "batch_size must be >= 1");
        } else if (key == "seed") {
            cfg.seed = static_cast<uint64_t>(parse_int(val, line_no, key));
        } else if (key == "learning_rate") {
            cfg.learning_rate = parse_real(val, line_no, key);
            if (!(cfg.learning_rate > 0.0)) fail(line_no, "learning_rate must be positive");
        } else if (key == "output_dir") {
            cfg.output_dir = val;
        } else if (key == "fisher_interval") {
            cfg.fisher_interval = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.fisher_interval < 0) fail(line_no, "fisher_interval must be >= 0");
        } else if (key == "eval_samples") {
            cfg.eval_samples = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.eval_samples < 1) fail(line_no, "eval_samples must be >= 1");
        } else if (key == "classifier_epochs") {
            cfg.classifier_epochs = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.classifier_epochs < 1) fail(line_no, "classifier_epochs must be >= 1");
        } else if (key == "run_id") {
            cfg.run_id = val;
        } else if (key == "resume") {
            cfg.resume = parse_bool(val, line_no, key);
        } else if (key == "sweep_depths") {
            cfg.sweep_depths.clear();
            for (const auto& item : split_list(val)) {
                const int dpt = static_cast<int>(parse_int(item, line_no, key));
                if (dpt < 1) fail(line_no, "sweep depth must be >= 1");
                cfg.sweep_depths.push_back(dpt);
            }
            if (cfg.sweep_depths.empty()) fail(line_no, "sweep_depths must be nonempty");
        } else if (key == "sweep_skips") {
            cfg.sweep_skips.clear();
            for (const auto& item : split_list(val)) {
                if (item != "none" && item != "every_layer") {
                    fail(line_no, "sweep skip mode must be none or every_layer");
                }
                cfg.sweep_skips.push_back(item);
            }
            if (cfg.sweep_skips.empty()) fail(line_no, "sweep_skips must be nonempty");
        } else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& item : split_list(val)) {
                cfg.seeds.push_back(static_cast<uint64_t>(parse_int(item, line_no, key)));
            }
            if (cfg.seeds.empty()) fail(line_no, "seeds must be nonempty");
        } else if (key == "preset_depth") {
            cfg.preset_depth = static_cast<int>(parse_int(val, line_no, key));
            if (cfg.preset_depth < 3) fail(line_no, "preset_depth must be >= 3");
        } else if (key == "table1_presets") {
            cfg.table1_presets.clear();
            for (const auto& item : split_list(val)) {
                if (!is_preset_name(item)) fail(line_no, "unknown preset '" + item + "'");
                cfg.table1_presets.push_back(item);
            }
        } else {
            fail(line_no, "unknown key '" + key + "'");
        }
    }
    if (!saw_dataset) throw config_error("config: dataset is required (mnist or synth)");
    if (!cfg.preset.empty() && cfg.explicit_arch) {
        throw config_error("config: preset and explicit architecture keys are mutually exclusive");
    }
    if (cfg.dataset == "mnist" && cfg.mnist_dir.empty()) {
        throw config_error("config: dataset = mnist requires mnist_dir");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

NetworkConfig RunConfig::resolved_network() const {
    NetworkConfig net;
    if (!preset.empty()) {
        net = preset_config(preset, preset_depth);
        net.hidden_width = network.hidden_width;
        net.latent_dim = network.latent_dim;
        net.activation = network.activation;
        net.likelihood = network.likelihood;
    } else {
        net = network;
    }
    net.data_dim = dataset == "synth" ? synth.dim : 784;
    net.validate();
    return net;
}

std::string RunConfig::resolved_run_id() const {
    if (!run_id.empty()) return run_id;
    const std::string base = preset.empty() ? "custom" : preset;
    return base + "_s" + std::to_string(seed);
}

} // namespace scvae
