#include "scvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "scvae/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace scvae {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'V', '1'};
constexpr char kStateMagic[4] = {'S', 'C', 'S', 'T'};

void put_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::ofstream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

void put_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

void put_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

uint32_t get_u32(std::ifstream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

uint64_t get_u64(std::ifstream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

double get_f64(std::ifstream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void get_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_record(std::ofstream& out, int layer, Side side, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(layer));
    const uint8_t tag = static_cast<uint8_t>(side);
    out.write(reinterpret_cast<const char*>(&tag), 1);
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    put_doubles(out, t.data);
}

} // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    for (const auto& e : params.entries) {
        write_record(out, e.layer, e.side, e.weight);
        write_record(out, e.layer, e.side, e.bias);
    }
    if (!out) throw io_error("failed writing checkpoint '" + path + "'");
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw config_error("'" + path + "' is not an SCV1 checkpoint");
    }
    struct Record {
        int layer;
        Side side;
        Tensor tensor;
    };
    std::vector<Record> records;
    while (true) {
        const uint32_t layer = get_u32(in);
        if (in.eof()) break;
        uint8_t tag = 0;
        in.read(reinterpret_cast<char*>(&tag), 1);
        const uint32_t rank = get_u32(in);
        if (!in || rank == 0 || rank > 2 || tag > 2) {
            throw config_error("checkpoint '" + path + "': corrupt record header");
        }
        std::vector<int64_t> shape;
        for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int64_t>(get_u32(in)));
        Tensor t = Tensor::zeros(shape);
        get_doubles(in, t.data);
        if (!in) throw config_error("checkpoint '" + path + "': truncated payload");
        records.push_back(Record{static_cast<int>(layer), static_cast<Side>(tag), std::move(t)});
    }
    if (records.size() % 2 != 0) {
        throw config_error("checkpoint '" + path + "': odd record count (weights and biases pair up)");
    }
    ParamStore store;
    for (size_t i = 0; i < records.size(); i += 2) {
        auto& w = records[i];
        auto& b = records[i + 1];
        if (w.layer != b.layer || w.side != b.side || w.tensor.shape.size() != 2 ||
            b.tensor.shape.size() != 1 || w.tensor.shape[0] != b.tensor.shape[0]) {
            throw config_error("checkpoint '" + path + "': weight/bias records do not pair up");
        }
        ParamEntry e;
        e.side = w.side;
        e.layer = w.layer;
        e.weight = std::move(w.tensor);
        e.bias = std::move(b.tensor);
        store.entries.push_back(std::move(e));
    }
    return store;
}

void check_params_match(const ParamStore& loaded, const ParamStore& expected) {
    if (loaded.entries.size() != expected.entries.size()) {
        throw config_error("checkpoint does not match the configured architecture: " +
                           std::to_string(loaded.entries.size()) + " layers vs " +
                           std::to_string(expected.entries.size()));
    }
    for (size_t i = 0; i < loaded.entries.size(); ++i) {
        const auto& a = loaded.entries[i];
        const auto& b = expected.entries[i];
        if (a.side != b.side || a.layer != b.layer || a.weight.shape != b.weight.shape ||
            a.bias.shape != b.bias.shape) {
            throw config_error("checkpoint does not match the configured architecture at " +
                               expected.entry_label(i));
        }
    }
}

void save_train_state(const std::string& path, const TrainState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(kStateMagic, 4);
    put_u32(out, 1);  // version
    put_u32(out, static_cast<uint32_t>(state.epoch));
    put_u32(out, state.has_best ? 1 : 0);
    put_f64(out, state.best_val_elbo);
    put_u64(out, static_cast<uint64_t>(state.optimizer.step_count));
    put_f64(out, state.optimizer.learning_rate);
    put_u32(out, static_cast<uint32_t>(state.optimizer.moments.size()));
    for (const auto& m : state.optimizer.moments) {
        put_doubles(out, m.m_w);
        put_doubles(out, m.v_w);
        put_doubles(out, m.m_b);
        put_doubles(out, m.v_b);
    }
    if (!out) throw io_error("failed writing train state '" + path + "'");
}

TrainState load_train_state(const std::string& path, const ParamStore& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kStateMagic, 4) != 0) {
        throw config_error("'" + path + "' is not a train-state file");
    }
    const uint32_t version = get_u32(in);
    if (version != 1) throw config_error("train state '" + path + "': unknown version");
    TrainState st;
    st.epoch = static_cast<int>(get_u32(in));
    st.has_best = get_u32(in) != 0;
    st.best_val_elbo = get_f64(in);
    st.optimizer = make_optimizer_state(params, 1e-3);
    st.optimizer.step_count = static_cast<int64_t>(get_u64(in));
    st.optimizer.learning_rate = get_f64(in);
    const uint32_t n = get_u32(in);
    if (n != st.optimizer.moments.size()) {
        throw config_error("train state '" + path + "' does not match the parameter store");
    }
    for (auto& m : st.optimizer.moments) {
        get_doubles(in, m.m_w);
        get_doubles(in, m.v_w);
        get_doubles(in, m.m_b);
        get_doubles(in, m.v_b);
    }
    if (!in) throw config_error("train state '" + path + "': truncated");
    return st;
}

} // namespace scvae
