#include "iconmark/backends.hpp"

#include <cctype>
#include <stdexcept>

namespace iconmark {

void BackendConfig::validate() const {
    if (!(timeout_s > 0.0)) throw std::invalid_argument("backend timeout must be > 0");
    if (max_retries < 0) throw std::invalid_argument("backend retries must be >= 0");
    if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be > 0");
}

YesNo parse_yes_no(const std::string& raw) {
    size_t i = 0;
    while (i < raw.size() &&
           !std::isalnum(static_cast<unsigned char>(raw[i])))
        ++i;
    std::string token;
    while (i < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i])))
        token.push_back(char(std::tolower(static_cast<unsigned char>(raw[i++]))));
    if (token.rfind("yes", 0) == 0) return YesNo::yes;
    if (token.rfind("no", 0) == 0) return YesNo::no;
    return YesNo::unparseable;
}

}  // namespace iconmark
