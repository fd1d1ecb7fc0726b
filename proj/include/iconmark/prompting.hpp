#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "iconmark/concept_db.hpp"

namespace iconmark {

// Concept-sampler reply yielded zero usable concepts; callers retry.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ChatPrompt {
    std::string system;
    std::string user;
};

struct SampledConcepts {
    std::vector<std::string> concepts;  // verbatim database strings, ordered, unique
    std::string source_fingerprint;
};

struct AugmentedPrompt {
    std::string text;
    int k = 0;
};

// Trim + non-empty check for user prompts p.
std::string make_user_prompt(const std::string& raw);

ChatPrompt build_sampler_prompt(const ConceptDatabase& db, const std::string& p, int k);

// Extracts <a>...</a> spans in order, keeps database members (returning the
// database's original string), drops non-members/duplicates, truncates to k.
// Throws ParseError when nothing usable was extracted.
SampledConcepts parse_sampled_concepts(const std::string& llm_text, const ConceptDatabase& db,
                                       int k);

AugmentedPrompt build_augmented_prompt(const std::string& p, const SampledConcepts& sampled);

std::string build_detection_query(const std::string& concept_text);

// Render any SampledConcepts back to tagged text (round-trip testing, mocks).
std::string render_tagged_concepts(const std::vector<std::string>& concepts);

// Frozen template bytes; templates/*.txt must match these exactly.
const std::string& sampler_system_template();
const std::string& sampler_user_template();
const std::string& augment_template();
const std::string& detect_template();

}  // namespace iconmark
