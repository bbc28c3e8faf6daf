#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace marspo {

// Deterministic, platform-independent RNG. The standard <random> engines are
// portable but the distributions are not, and byte-identical artifacts across
// runs and machines are a hard requirement, so all randomness in the pipeline
// goes through this.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n), unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next();
        while (v >= limit) v = next();
        return v % n;
    }

private:
    std::uint64_t state_;
};

// One-shot scramble of a 64-bit value; used to derive child seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    SplitMix64 r(x);
    return r.next();
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Stable 64-bit string hash (FNV-1a); not cryptographic.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace marspo
