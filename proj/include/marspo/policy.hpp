#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "marspo/vocab.hpp"

namespace marspo {

// Order-c autoregressive categorical policy: one logit row per context of c
// token ids, row-major [V^c, V]. Small enough that every loss and gradient in
// the objective has an exact closed form.
struct PolicySnapshot {
    int order = 2;
    TokenVocab vocab;
    std::vector<double> params;  // logits, size V^order * V

    int vsize() const { return vocab.size(); }
    std::size_t rows() const;
    const double* row(std::size_t r) const { return params.data() + r * static_cast<std::size_t>(vsize()); }
    double* row(std::size_t r) { return params.data() + r * static_cast<std::size_t>(vsize()); }

    // All-zero logits: the uniform policy.
    static PolicySnapshot uniform(TokenVocab vocab, int order);
    // Logits ~ sigma * standard normal, seeded and platform-stable.
    static PolicySnapshot random_init(TokenVocab vocab, int order, std::uint64_t seed, double sigma);

    bool same_shape(const PolicySnapshot& other) const {
        return order == other.order && vocab.tokens == other.vocab.tokens;
    }
};

// Rolling context row index: start at context [begin]*c, then push tokens.
class ContextWindow {
public:
    ContextWindow(int vocab_size, int order);
    void push(int token_id);
    std::size_t row() const { return row_; }

private:
    std::size_t row_ = 0;
    std::size_t modulus_ = 1;  // V^(order-1)
    int vsize_ = 2;
};

// Binary policy file: magic "MPOLICY1", little-endian u32 version, u32 V,
// u32 order, then row-major logits as little-endian 64-bit floats.
void save_policy(const std::filesystem::path& path, const PolicySnapshot& policy);
PolicySnapshot load_policy(const std::filesystem::path& path, TokenVocab vocab);

}  // namespace marspo
