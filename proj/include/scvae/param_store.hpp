#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scvae/tensor.hpp"

namespace scvae {

// Side tags double as the u8 codes in the checkpoint format.
enum class Side : uint8_t { encoder = 0, decoder = 1, latent_head = 2 };

const char* side_name(Side s);

struct ParamEntry {
    Side side;
    int layer;          // contiguous from 1 within a side
    Tensor weight;      // [n_out x n_in]
    Tensor bias;        // [n_out]
};

struct ParamStore {
    std::vector<ParamEntry> entries;

    int64_t total_params() const;
    std::string entry_label(size_t idx) const;          // e.g. "encoder layer 3"
    int find(Side side, int layer) const;               // -1 if absent
    void clear_grads();
};

} // namespace scvae
