#include "bikit/sha256.hpp"

#include "bikit/errors.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <fstream>
#include <memory>
#include <vector>

namespace bikit {

namespace {

std::string to_hex(const unsigned char* digest, std::size_t n) {
    static const char* hex = "0123456789abcdef";
    std::string out(n * 2, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = hex[digest[i] >> 4];
        out[2 * i + 1] = hex[digest[i] & 0xF];
    }
    return out;
}

struct CtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_MD_CTX, CtxDeleter>;

} // namespace

std::string sha256_hex(std::span<const std::byte> data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("digest-failure", "sha256 computation failed");
    }
    return to_hex(digest, len);
}

std::string sha256_hex(std::string_view data) {
    return sha256_hex(std::as_bytes(std::span(data.data(), data.size())));
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) {
        throw Error("io-error", "cannot open file for hashing: " + path.string());
    }
    CtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error("digest-failure", "sha256 init failed");
    }
    std::array<char, 1 << 16> buf;
    while (in.good()) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const std::streamsize got = in.gcount();
        if (got > 0 &&
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got)) != 1) {
            throw Error("digest-failure", "sha256 update failed");
        }
    }
    if (in.bad()) {
        throw Error("io-error", "read failed while hashing: " + path.string());
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error("digest-failure", "sha256 final failed");
    }
    return to_hex(digest, len);
}

bool is_hex_digest(std::string_view s) {
    if (s.size() != 64) return false;
    for (unsigned char c : s) {
        if (!std::isxdigit(c)) return false;
    }
    return true;
}

} // namespace bikit
