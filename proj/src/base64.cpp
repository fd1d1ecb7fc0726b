#include "iconmark/base64.hpp"

#include <array>
#include <stdexcept>

namespace iconmark {

namespace {
constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::array<int, 256> build_rev() {
    std::array<int, 256> rev;
    rev.fill(-1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kAlphabet[i])] = i;
    return rev;
}
}  // namespace

std::string base64_encode(const unsigned char* data, size_t n) {
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (size_t i = 0; i < n; i += 3) {
        const unsigned b0 = data[i];
        const unsigned b1 = i + 1 < n ? data[i + 1] : 0;
        const unsigned b2 = i + 2 < n ? data[i + 2] : 0;
        out.push_back(kAlphabet[b0 >> 2]);
        out.push_back(kAlphabet[((b0 & 0x03) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < n ? kAlphabet[((b1 & 0x0f) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < n ? kAlphabet[b2 & 0x3f] : '=');
    }
    return out;
}

std::string base64_encode(const std::vector<unsigned char>& data) {
    return base64_encode(data.data(), data.size());
}

std::vector<unsigned char> base64_decode(std::string_view s) {
    static const std::array<int, 256> rev = build_rev();
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    unsigned acc = 0;
    int nbits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = rev[static_cast<unsigned char>(c)];
        if (v < 0) throw std::invalid_argument("base64_decode: invalid character");
        acc = (acc << 6) | static_cast<unsigned>(v);
        nbits += 6;
        if (nbits >= 8) {
            nbits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> nbits) & 0xff));
        }
    }
    return out;
}

}  // namespace iconmark
