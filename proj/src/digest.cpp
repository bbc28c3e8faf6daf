#include "marspo/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <stdexcept>

namespace marspo {

namespace {

std::string to_hex(const unsigned char* data, std::size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string out(len * 2, '0');
    for (std::size_t i = 0; i < len; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xf];
    }
    return out;
}

struct Sha256Ctx {
    EVP_MD_CTX* ctx;
    Sha256Ctx() : ctx(EVP_MD_CTX_new()) {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256: init failed");
    }
    ~Sha256Ctx() { EVP_MD_CTX_free(ctx); }
    void update(const void* data, std::size_t len) {
        if (EVP_DigestUpdate(ctx, data, len) != 1) throw std::runtime_error("sha256: update failed");
    }
    std::string finish() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) throw std::runtime_error("sha256: final failed");
        return to_hex(md.data(), len);
    }
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256Ctx c;
    c.update(bytes.data(), bytes.size());
    return c.finish();
}

std::string sha256_file_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("sha256: cannot open " + path.string());
    Sha256Ctx c;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        c.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return c.finish();
}

}  // namespace marspo
