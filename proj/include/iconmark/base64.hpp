#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace iconmark {

std::string base64_encode(const unsigned char* data, size_t n);
std::string base64_encode(const std::vector<unsigned char>& data);
std::vector<unsigned char> base64_decode(std::string_view s);

}  // namespace iconmark
