#include "remember/hash.hpp"

#include "remember/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

namespace remember {

std::string sha256_raw(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(Errc::StorageFailure, "sha256 digest failed");
    }
    return std::string(reinterpret_cast<const char*>(md.data()), len);
}

std::string sha256_hex(std::string_view bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    const std::string raw = sha256_raw(bytes);
    std::string out;
    out.reserve(raw.size() * 2);
    for (unsigned char c : raw) {
        out.push_back(kHex[c >> 4]);
        out.push_back(kHex[c & 0xf]);
    }
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw Error(Errc::InvalidArgument, "base64 length not a multiple of 4");
    }
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw Error(Errc::InvalidArgument, "invalid base64");
    }
    // EVP_DecodeBlock keeps the zero bytes produced by padding.
    size_t pad = 0;
    if (!text.empty() && text.back() == '=') {
        ++pad;
        if (text.size() >= 2 && text[text.size() - 2] == '=') {
            ++pad;
        }
    }
    out.resize(static_cast<size_t>(n) - pad);
    return out;
}

} // namespace remember
