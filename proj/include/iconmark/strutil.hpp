#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace iconmark {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// Collapse internal runs of whitespace (space/tab/CR/LF) to single spaces.
std::string collapse_ws(std::string_view s);
// trim + collapse_ws + to_lower: the canonical form used for duplicate checks.
std::string canonical_concept(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Replace every "{key}" occurrence for each (key, value) pair. Unknown
// placeholders are left untouched so mistakes surface in rendered output.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& subs);

std::string to_hex(const unsigned char* data, size_t n);

// Fixed-format floating point for reports: shortest round-trip decimal.
std::string format_double(double v);

// Current UTC time, e.g. "2024-05-31T12:00:00Z". Provenance only; never part
// of determinism-checked outputs.
std::string iso8601_utc_now();

}  // namespace iconmark
