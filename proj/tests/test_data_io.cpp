#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <set>

#include "scvae/data_io.hpp"
#include "scvae/errors.hpp"
#include "scvae/eval.hpp"
#include "scvae/rng.hpp"

using namespace scvae;

namespace {

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

std::vector<uint8_t> make_image_file(uint32_t n, uint32_t rows, uint32_t cols,
                                     const std::vector<uint8_t>& pixels) {
    std::vector<uint8_t> v;
    push_be32(v, 0x00000803);
    push_be32(v, n);
    push_be32(v, rows);
    push_be32(v, cols);
    v.insert(v.end(), pixels.begin(), pixels.end());
    return v;
}

std::vector<uint8_t> make_label_file(const std::vector<uint8_t>& labels) {
    std::vector<uint8_t> v;
    push_be32(v, 0x00000801);
    push_be32(v, static_cast<uint32_t>(labels.size()));
    v.insert(v.end(), labels.begin(), labels.end());
    return v;
}

std::vector<uint8_t> gzip_bytes(const std::vector<uint8_t>& in) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    REQUIRE(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<uint8_t> out(in.size() + 128);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(out.size() - zs.avail_out);
    deflateEnd(&zs);
    return out;
}

} // namespace

TEST_CASE("hand-built 1x2x2 image file parses with exact scaling") {
    const auto bytes = make_image_file(1, 2, 2, {0, 255, 128, 0});
    IdxContent c = parse_idx(bytes);
    REQUIRE(c.is_images);
    CHECK(c.images.shape == std::vector<int64_t>{1, 4});
    CHECK(c.images.data[0] == 0.0);
    CHECK(c.images.data[1] == 1.0);
    CHECK(c.images.data[2] == doctest::Approx(128.0 / 255.0));
    CHECK(c.images.data[3] == 0.0);
    CHECK(c.idx_rows == 2);
    CHECK(c.idx_cols == 2);
}

TEST_CASE("bad magic is quoted in the error") {
    std::vector<uint8_t> bytes;
    push_be32(bytes, 0xDEADBEEF);
    push_be32(bytes, 1);
    try {
        parse_idx(bytes);
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("0xdeadbeef") != std::string::npos);
    }
}

TEST_CASE("truncated payload reports expected vs actual byte counts") {
    auto bytes = make_image_file(2, 2, 2, {1, 2, 3, 4, 5});  // needs 8 pixels, has 5
    try {
        parse_idx(bytes);
        FAIL("expected config_error");
    } catch (const config_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("24") != std::string::npos);   // 16 header + 8 payload
        CHECK(msg.find("21") != std::string::npos);
    }
}

TEST_CASE("gzip-compressed files are decompressed transparently") {
    const auto plain = make_label_file({3, 1, 4, 1, 5});
    const auto packed = gzip_bytes(plain);
    REQUIRE(packed[0] == 0x1f);
    REQUIRE(packed[1] == 0x8b);
    IdxContent c = parse_idx(packed);
    CHECK_FALSE(c.is_images);
    CHECK(c.labels == std::vector<uint8_t>{3, 1, 4, 1, 5});
}

TEST_CASE("idx round trip is bitwise for files and tensors") {
    Rng rng(10);
    std::vector<uint8_t> pixels(3 * 4 * 4);
    for (auto& p : pixels) p = static_cast<uint8_t>(rng.below(256));
    const auto file_a = make_image_file(3, 4, 4, pixels);
    IdxContent parsed = parse_idx(file_a);
    const auto file_b = write_idx_images(parsed.images, parsed.idx_rows, parsed.idx_cols);
    CHECK(file_a == file_b);
    IdxContent reparsed = parse_idx(file_b);
    CHECK(std::memcmp(parsed.images.data.data(), reparsed.images.data.data(),
                      parsed.images.data.size() * sizeof(double)) == 0);

    std::vector<uint8_t> labels = {0, 9, 4, 4, 7};
    const auto lbl_file = write_idx_labels(labels);
    CHECK(parse_idx(lbl_file).labels == labels);
}

TEST_CASE("splits take the first 50k for train and the last 10k for validation") {
    // official-shape synthetic files: 60000 train rows, 10000 test rows, 1x2 images
    const int64_t d = 2;
    std::vector<uint8_t> train_px(60000 * d), test_px(10000 * d);
    std::vector<uint8_t> train_lb(60000), test_lb(10000);
    for (size_t i = 0; i < train_lb.size(); ++i) {
        train_lb[i] = static_cast<uint8_t>(i % 10);
        train_px[2 * i] = static_cast<uint8_t>(i % 251);
        train_px[2 * i + 1] = static_cast<uint8_t>((i / 251) % 251);
    }
    for (size_t i = 0; i < test_lb.size(); ++i) {
        test_lb[i] = static_cast<uint8_t>(i % 10);
        test_px[2 * i] = static_cast<uint8_t>((i + 13) % 251);
    }
    const auto tri = parse_idx(make_image_file(60000, 1, 2, train_px));
    const auto trl = parse_idx(make_label_file(train_lb));
    const auto tei = parse_idx(make_image_file(10000, 1, 2, test_px));
    const auto tel = parse_idx(make_label_file(test_lb));

    DatasetSplit split = make_splits(tri, trl, tei, tel);
    CHECK(split.train_images.rows() == 50000);
    CHECK(split.val_images.rows() == 10000);
    CHECK(split.test_images.rows() == 10000);
    CHECK(split.train_labels.size() == 50000);
    CHECK(split.val_labels.size() == 10000);

    // the validation block is exactly rows 50000..59999: disjoint from train
    CHECK(split.val_images.at(0, 0) == tri.images.at(50000, 0));
    CHECK(split.val_images.at(0, 1) == tri.images.at(50000, 1));
    CHECK(split.train_images.at(49999, 0) == tri.images.at(49999, 0));
    // the split is deterministic regardless of any seed: same call, same bytes
    DatasetSplit again = make_splits(tri, trl, tei, tel);
    CHECK(std::memcmp(split.train_images.data.data(), again.train_images.data.data(),
                      split.train_images.data.size() * sizeof(double)) == 0);

    // row-count mismatches are input errors
    const auto bad = parse_idx(make_image_file(59999, 1, 2,
                                               std::vector<uint8_t>(59999 * 2)));
    CHECK_THROWS_AS(make_splits(bad, trl, tei, tel), config_error);
}

TEST_CASE("synth dataset is deterministic with the documented row counts") {
    DatasetSplit a = synth_dataset(42, 100, 4, 16);
    DatasetSplit b = synth_dataset(42, 100, 4, 16);
    CHECK(a.train_images.rows() == 400);
    CHECK(a.val_images.rows() == 80);
    CHECK(a.test_images.rows() == 80);
    CHECK(std::memcmp(a.train_images.data.data(), b.train_images.data.data(),
                      a.train_images.data.size() * sizeof(double)) == 0);
    CHECK(a.train_labels == b.train_labels);
    std::set<double> vals(a.train_images.data.begin(), a.train_images.data.end());
    for (double v : vals) CHECK((v == 0.0 || v == 1.0));

    DatasetSplit c = synth_dataset(43, 100, 4, 16);
    CHECK(std::memcmp(a.train_images.data.data(), c.train_images.data.data(),
                      a.train_images.data.size() * sizeof(double)) != 0);
}

TEST_CASE("synth classes are linearly separable from raw pixels") {
    DatasetSplit data = synth_dataset(7, 200, 4, 64);
    const double acc = latent_classify(data.train_images, data.train_labels, data.test_images,
                                       data.test_labels, 20, 1);
    CHECK(acc > 0.9);
}

TEST_CASE("synth parameter validation") {
    CHECK_THROWS_AS(synth_dataset(1, 10, 11, 16), config_error);
    CHECK_THROWS_AS(synth_dataset(1, 10, 4, 1), config_error);
    CHECK_THROWS_AS(synth_dataset(1, 0, 4, 16), config_error);
}
