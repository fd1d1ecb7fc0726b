#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace iconmark {

// The private concept database D: ordered, validated, fingerprinted.
class ConceptDatabase {
public:
    // Construct from raw concept strings; throws on invariant violations.
    explicit ConceptDatabase(std::vector<std::string> concepts);

    size_t size() const { return concepts_.size(); }
    const std::vector<std::string>& concepts() const { return concepts_; }
    const std::string& at(size_t i) const { return concepts_.at(i); }

    // SHA-256 of newline-joined canonical concepts.
    const std::string& fingerprint() const { return fingerprint_; }

    // Index of the concept whose canonical form matches, or -1.
    int find_canonical(const std::string& concept_text) const;
    bool contains(const std::string& concept_text) const { return find_canonical(concept_text) >= 0; }

private:
    std::vector<std::string> concepts_;
    std::string fingerprint_;
};

// File format: UTF-8 text, one concept per line, '#' lines are comments.
ConceptDatabase load_concept_db(const std::filesystem::path& path);
void save_concept_db(const ConceptDatabase& db, const std::filesystem::path& path);

// Invariant audit; empty result means the database is valid. Never throws.
std::vector<std::string> validate_concepts(const std::vector<std::string>& concepts);

}  // namespace iconmark
