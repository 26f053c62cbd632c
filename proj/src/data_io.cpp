#include "scvae/data_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "scvae/errors.hpp"
#include "scvae/rng.hpp"

namespace scvae {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_be32(std::span<const uint8_t> bytes, size_t off) {
    return (static_cast<uint32_t>(bytes[off]) << 24) | (static_cast<uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<uint32_t>(bytes[off + 2]) << 8) | static_cast<uint32_t>(bytes[off + 3]);
}

void write_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

std::vector<uint8_t> gunzip(std::span<const uint8_t> bytes) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw io_error("zlib: inflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::vector<uint8_t> out;
    std::vector<uint8_t> buf(1 << 16);
    int ret = Z_OK;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw config_error("gzip: corrupt compressed stream (zlib code " + std::to_string(ret) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (ret != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

char hexdig(uint32_t v) { return "0123456789abcdef"[v & 0xf]; }

std::string hex32(uint32_t v) {
    std::string s = "0x";
    for (int shift = 28; shift >= 0; shift -= 4) s += hexdig(v >> shift);
    return s;
}

} // namespace

IdxContent parse_idx(std::span<const uint8_t> bytes) {
    std::vector<uint8_t> inflated;
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        inflated = gunzip(bytes);
        bytes = inflated;
    }
    if (bytes.size() < 4) {
        throw config_error("IDX: file too short for the magic number (" +
                           std::to_string(bytes.size()) + " bytes)");
    }
    const uint32_t magic = read_be32(bytes, 0);
    IdxContent content;
    size_t dims = 0;
    if (magic == kImagesMagic) {
        content.is_images = true;
        dims = 3;
    } else if (magic == kLabelsMagic) {
        dims = 1;
    } else {
        throw config_error("IDX: bad magic " + hex32(magic) + " (expected " + hex32(kImagesMagic) +
                           " for images or " + hex32(kLabelsMagic) + " for labels)");
    }
    const size_t header = 4 + 4 * dims;
    if (bytes.size() < header) {
        throw config_error("IDX: truncated header, expected " + std::to_string(header) +
                           " bytes, got " + std::to_string(bytes.size()));
    }
    uint64_t n_items = 1;
    std::vector<uint32_t> sizes;
    for (size_t i = 0; i < dims; ++i) {
        sizes.push_back(read_be32(bytes, 4 + 4 * i));
        n_items *= sizes.back();
    }
    const size_t expected = header + n_items;
    if (bytes.size() != expected) {
        throw config_error("IDX: truncated payload, expected " + std::to_string(expected) +
                           " bytes, got " + std::to_string(bytes.size()));
    }
    const uint8_t* payload = bytes.data() + header;
    if (content.is_images) {
        content.idx_rows = static_cast<int>(sizes[1]);
        content.idx_cols = static_cast<int>(sizes[2]);
        const int64_t n = static_cast<int64_t>(sizes[0]);
        const int64_t d = static_cast<int64_t>(sizes[1]) * sizes[2];
        content.images = Tensor::zeros({n, d});
        for (int64_t i = 0; i < n * d; ++i) {
            content.images.data[static_cast<size_t>(i)] = static_cast<double>(payload[i]) / 255.0;
        }
    } else {
        content.labels.assign(payload, payload + n_items);
    }
    return content;
}

std::vector<uint8_t> write_idx_images(const Tensor& images, int rows, int cols) {
    if (images.cols() != static_cast<int64_t>(rows) * cols) {
        throw usage_error("write_idx_images: rows*cols must equal the image width");
    }
    std::vector<uint8_t> out;
    out.reserve(16 + images.data.size());
    write_be32(out, kImagesMagic);
    write_be32(out, static_cast<uint32_t>(images.rows()));
    write_be32(out, static_cast<uint32_t>(rows));
    write_be32(out, static_cast<uint32_t>(cols));
    for (double v : images.data) {
        const double scaled = std::round(v * 255.0);
        if (!(scaled >= 0.0 && scaled <= 255.0)) {
            throw usage_error("write_idx_images: pixel out of [0,1]");
        }
        out.push_back(static_cast<uint8_t>(scaled));
    }
    return out;
}

std::vector<uint8_t> write_idx_labels(std::span<const uint8_t> labels) {
    std::vector<uint8_t> out;
    out.reserve(8 + labels.size());
    write_be32(out, kLabelsMagic);
    write_be32(out, static_cast<uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("failed writing '" + path + "'");
}

namespace {

void check_labels(std::span<const uint8_t> labels) {
    for (uint8_t l : labels) {
        if (l > 9) throw config_error("label " + std::to_string(l) + " outside 0..9");
    }
}

} // namespace

DatasetSplit make_splits(const IdxContent& train_images, const IdxContent& train_labels,
                         const IdxContent& test_images, const IdxContent& test_labels) {
    if (!train_images.is_images || !test_images.is_images || train_labels.is_images ||
        test_labels.is_images) {
        throw config_error("make_splits: images/labels arguments are swapped or mistyped");
    }
    const int64_t n_train = train_images.images.rows();
    const int64_t n_test = test_images.images.rows();
    if (n_train != 60000 || static_cast<int64_t>(train_labels.labels.size()) != 60000) {
        throw config_error("make_splits: expected 60000 training rows, got " +
                           std::to_string(n_train) + " images / " +
                           std::to_string(train_labels.labels.size()) + " labels");
    }
    if (n_test != 10000 || static_cast<int64_t>(test_labels.labels.size()) != 10000) {
        throw config_error("make_splits: expected 10000 test rows, got " + std::to_string(n_test) +
                           " images / " + std::to_string(test_labels.labels.size()) + " labels");
    }
    check_labels(train_labels.labels);
    check_labels(test_labels.labels);

    const int64_t d = train_images.images.cols();
    DatasetSplit split;
    split.train_images = Tensor::zeros({50000, d});
    std::copy_n(train_images.images.data.begin(), 50000 * d, split.train_images.data.begin());
    split.train_labels.assign(train_labels.labels.begin(), train_labels.labels.begin() + 50000);

    split.val_images = Tensor::zeros({10000, d});
    std::copy_n(train_images.images.data.begin() + 50000 * d, 10000 * d, split.val_images.data.begin());
    split.val_labels.assign(train_labels.labels.begin() + 50000, train_labels.labels.end());

    split.test_images = test_images.images;
    split.test_labels = test_labels.labels;
    return split;
}

DatasetSplit synth_dataset(uint64_t seed, int n_per_class, int n_classes, int d) {
    if (n_classes < 1 || n_classes > 10) throw config_error("synth: n_classes must be in 1..10");
    if (d < 2) throw config_error("synth: dimension must be >= 2");
    if (n_per_class < 1) throw config_error("synth: n_per_class must be >= 1");

    Rng rng(mix_seed(seed, 0xda7a));
    std::vector<std::vector<double>> templates(static_cast<size_t>(n_classes));
    for (auto& t : templates) {
        t.resize(static_cast<size_t>(d));
        for (auto& v : t) v = rng.uniform(0.1, 0.9);
    }

    const int n_eval = std::max(1, n_per_class / 5);
    auto draw = [&](int per_class, Tensor& images, std::vector<uint8_t>& labels) {
        images = Tensor::zeros({static_cast<int64_t>(per_class) * n_classes, d});
        labels.clear();
        int64_t row = 0;
        for (int c = 0; c < n_classes; ++c) {
            for (int i = 0; i < per_class; ++i, ++row) {
                double* px = images.data.data() + row * d;
                for (int j = 0; j < d; ++j) {
                    px[j] = rng.uniform() < templates[static_cast<size_t>(c)][static_cast<size_t>(j)]
                                ? 1.0 : 0.0;
                }
                labels.push_back(static_cast<uint8_t>(c));
            }
        }
    };

    DatasetSplit split;
    draw(n_per_class, split.train_images, split.train_labels);
    draw(n_eval, split.val_images, split.val_labels);
    draw(n_eval, split.test_images, split.test_labels);
    return split;
}

namespace {

std::string find_idx_file(const std::string& dir, const std::string& stem) {
    namespace fs = std::filesystem;
    for (const char* suffix : {"", ".gz"}) {
        const std::string p = dir + "/" + stem + suffix;
        if (fs::exists(p)) return p;
    }
    throw config_error("MNIST: '" + stem + "' (or .gz) not found under '" + dir + "'");
}

} // namespace

DatasetSplit load_mnist_dir(const std::string& dir) {
    const auto tri = parse_idx(read_file(find_idx_file(dir, "train-images-idx3-ubyte")));
    const auto trl = parse_idx(read_file(find_idx_file(dir, "train-labels-idx1-ubyte")));
    const auto tei = parse_idx(read_file(find_idx_file(dir, "t10k-images-idx3-ubyte")));
    const auto tel = parse_idx(read_file(find_idx_file(dir, "t10k-labels-idx1-ubyte")));
    return make_splits(tri, trl, tei, tel);
}

} // namespace scvae
