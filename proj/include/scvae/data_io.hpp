#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scvae/tensor.hpp"

namespace scvae {

struct IdxContent {
    bool is_images = false;
    Tensor images;                    // [n x (rows*cols)], values in [0,1]
    int idx_rows = 0, idx_cols = 0;   // original image dims
    std::vector<uint8_t> labels;
};

// Parses an IDX file (gzip-compressed input is decompressed transparently
// when the 0x1F8B magic is present). Throws config_error on format problems.
IdxContent parse_idx(std::span<const uint8_t> bytes);

std::vector<uint8_t> write_idx_images(const Tensor& images, int rows, int cols);
std::vector<uint8_t> write_idx_labels(std::span<const uint8_t> labels);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

struct DatasetSplit {
    Tensor train_images;
    std::vector<uint8_t> train_labels;
    Tensor val_images;
    std::vector<uint8_t> val_labels;
    Tensor test_images;
    std::vector<uint8_t> test_labels;

    int64_t dim() const { return train_images.cols(); }
};

// Standard 50000/10000/10000 assignment: first 50k training rows train,
// last 10k validation, the official test set as-is. No shuffling.
DatasetSplit make_splits(const IdxContent& train_images, const IdxContent& train_labels,
                         const IdxContent& test_images, const IdxContent& test_labels);

// Class-conditional product-Bernoulli images: each class draws a template
// in [0.1, 0.9]^d once, pixels are independent coin flips against it.
// Validation and test get max(1, n_per_class/5) rows per class.
DatasetSplit synth_dataset(uint64_t seed, int n_per_class, int n_classes, int d);

// Loads the four standard MNIST files (optionally .gz) from a directory.
DatasetSplit load_mnist_dir(const std::string& dir);

} // namespace scvae
