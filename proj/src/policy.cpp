#include "marspo/policy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "marspo/rng.hpp"

namespace marspo {

namespace {

std::size_t checked_rows(int vocab_size, int order) {
    if (vocab_size < 2) throw std::runtime_error("vocab size must be >= 2");
    if (order < 1) throw std::runtime_error("policy order must be >= 1");
    std::size_t rows = 1;
    for (int i = 0; i < order; ++i) {
        if (rows > (std::size_t{1} << 40) / static_cast<std::size_t>(vocab_size)) {
            throw std::runtime_error("policy table too large for this vocab/order");
        }
        rows *= static_cast<std::size_t>(vocab_size);
    }
    return rows;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr char kMagic[8] = {'M', 'P', 'O', 'L', 'I', 'C', 'Y', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::size_t PolicySnapshot::rows() const { return checked_rows(vsize(), order); }

PolicySnapshot PolicySnapshot::uniform(TokenVocab vocab, int order) {
    PolicySnapshot p;
    p.order = order;
    p.vocab = std::move(vocab);
    p.params.assign(p.rows() * static_cast<std::size_t>(p.vsize()), 0.0);
    return p;
}

PolicySnapshot PolicySnapshot::random_init(TokenVocab vocab, int order, std::uint64_t seed, double sigma) {
    PolicySnapshot p = uniform(std::move(vocab), order);
    SplitMix64 rng(seed);
    // Box-Muller on explicitly constructed uniforms keeps initialization
    // byte-stable across platforms.
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < p.params.size(); i += 2) {
        double u1 = rng.next_double();
        double u2 = rng.next_double();
        while (u1 <= 0.0) u1 = rng.next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        p.params[i] = sigma * r * std::cos(two_pi * u2);
        if (i + 1 < p.params.size()) p.params[i + 1] = sigma * r * std::sin(two_pi * u2);
    }
    return p;
}

ContextWindow::ContextWindow(int vocab_size, int order) : vsize_(vocab_size) {
    const std::size_t rows = checked_rows(vocab_size, order);
    modulus_ = rows / static_cast<std::size_t>(vocab_size);  // V^(order-1)
    row_ = 0;
    for (int i = 0; i < order; ++i) {
        row_ = row_ * static_cast<std::size_t>(vocab_size) + TokenVocab::kBegin;
    }
}

void ContextWindow::push(int token_id) {
    row_ = (row_ % modulus_) * static_cast<std::size_t>(vsize_) + static_cast<std::size_t>(token_id);
}

void save_policy(const std::filesystem::path& path, const PolicySnapshot& policy) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write policy file " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(policy.vsize()));
    put_u32(out, static_cast<std::uint32_t>(policy.order));
    static_assert(std::endian::native == std::endian::little, "policy file writer assumes little-endian host");
    out.write(reinterpret_cast<const char*>(policy.params.data()),
              static_cast<std::streamsize>(policy.params.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed for policy file " + path.string());
}

PolicySnapshot load_policy(const std::filesystem::path& path, TokenVocab vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open policy file " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("bad policy file magic in " + path.string());
    }
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) throw std::runtime_error("unsupported policy file version");
    const std::uint32_t v = get_u32(in);
    const std::uint32_t order = get_u32(in);
    if (static_cast<int>(v) != vocab.size()) {
        throw std::runtime_error("policy vocab size " + std::to_string(v) + " does not match config vocab " +
                                 std::to_string(vocab.size()));
    }
    PolicySnapshot p = PolicySnapshot::uniform(std::move(vocab), static_cast<int>(order));
    in.read(reinterpret_cast<char*>(p.params.data()),
            static_cast<std::streamsize>(p.params.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(p.params.size() * sizeof(double))) {
        throw std::runtime_error("truncated policy file " + path.string());
    }
    return p;
}

}  // namespace marspo
