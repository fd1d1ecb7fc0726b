#include "iconmark/concept_db.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "iconmark/sha256.hpp"
#include "iconmark/strutil.hpp"

namespace iconmark {

namespace {
constexpr size_t kMaxConceptLen = 200;
}

std::vector<std::string> validate_concepts(const std::vector<std::string>& concepts) {
    std::vector<std::string> violations;
    if (concepts.empty()) {
        violations.push_back("empty database: at least one concept is required");
        return violations;
    }
    std::map<std::string, size_t> seen;  // canonical -> first index
    for (size_t i = 0; i < concepts.size(); ++i) {
        const std::string& c = concepts[i];
        if (trim(c).empty()) {
            violations.push_back("concept #" + std::to_string(i + 1) + " is empty");
            continue;
        }
        if (c.size() > kMaxConceptLen)
            violations.push_back("concept '" + c.substr(0, 40) + "...' exceeds " +
                                 std::to_string(kMaxConceptLen) + " characters");
        if (c.find('\n') != std::string::npos || c.find('\r') != std::string::npos)
            violations.push_back("concept #" + std::to_string(i + 1) + " contains a newline");
        const std::string canon = canonical_concept(c);
        auto [it, inserted] = seen.emplace(canon, i);
        if (!inserted)
            violations.push_back("duplicate concept '" + c + "' matches '" +
                                 concepts[it->second] + "' (entries " +
                                 std::to_string(it->second + 1) + " and " +
                                 std::to_string(i + 1) + " after canonicalization)");
    }
    return violations;
}

ConceptDatabase::ConceptDatabase(std::vector<std::string> concepts)
    : concepts_(std::move(concepts)) {
    const auto violations = validate_concepts(concepts_);
    if (!violations.empty()) {
        std::string msg = "invalid concept database:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw std::invalid_argument(msg);
    }
    std::vector<std::string> canon;
    canon.reserve(concepts_.size());
    for (const auto& c : concepts_) canon.push_back(canonical_concept(c));
    fingerprint_ = sha256_hex(join(canon, "\n"));
}

int ConceptDatabase::find_canonical(const std::string& concept_text) const {
    const std::string canon = canonical_concept(concept_text);
    for (size_t i = 0; i < concepts_.size(); ++i)
        if (canonical_concept(concepts_[i]) == canon) return int(i);
    return -1;
}

ConceptDatabase load_concept_db(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("missing concept file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    std::vector<std::string> concepts;
    std::vector<size_t> line_nos;
    const auto lines = split_lines(text);
    for (size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string t = trim(lines[ln]);
        if (t.empty() || t[0] == '#') continue;
        concepts.push_back(t);
        line_nos.push_back(ln + 1);
    }
    if (concepts.empty())
        throw std::runtime_error("empty database: no concept lines in " + path.string());

    // Re-run duplicate detection with file line numbers for actionable errors.
    std::map<std::string, size_t> seen;
    for (size_t i = 0; i < concepts.size(); ++i) {
        auto [it, inserted] = seen.emplace(canonical_concept(concepts[i]), i);
        if (!inserted)
            throw std::runtime_error("duplicate concept '" + concepts[i] + "' at lines " +
                                     std::to_string(line_nos[it->second]) + " and " +
                                     std::to_string(line_nos[i]) + " in " + path.string());
    }
    return ConceptDatabase(std::move(concepts));
}

void save_concept_db(const ConceptDatabase& db, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    for (const auto& c : db.concepts()) f << c << '\n';
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace iconmark
