#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace iconmark {

// FIPS 180-4 SHA-256, streaming.
class Sha256 {
public:
    Sha256();
    void update(const void* data, size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::array<unsigned char, 32> digest();  // finalizes; call once

private:
    void process_block(const unsigned char* block);

    std::array<std::uint32_t, 8> h_;
    std::array<unsigned char, 64> buf_{};
    size_t buf_len_ = 0;
    std::uint64_t total_ = 0;
};

std::string sha256_hex(std::string_view data);
std::string sha256_hex(const std::vector<unsigned char>& data);

}  // namespace iconmark
