#include "iconmark/prompting.hpp"

#include <set>

#include "iconmark/strutil.hpp"

namespace iconmark {

namespace {

const std::string kSamplerSystem =
    "Here is a database of {n} concepts:\n"
    "\n"
    "{concepts}\n"
    "\n"
    "In an image of `{p}', what are the top {k} related concepts from this database that "
    "can very likely occur in the background of this image? Consider only concepts that "
    "are related to this given image. For example, an image of a lion cannot have a "
    "basketball or a table in the background, whereas an image of a bird can have a tree "
    "or a mountain in the background. The concepts should be ONLY from the database of "
    "concepts given above. You should NOT generate new concepts.";

const std::string kSamplerUser =
    "Print each of the {k} related concepts verbatim between <a> and </a>.";

const std::string kAugment = "{p} in the foreground. add following: \n{concepts}. \n\n sharp, detailed.";

const std::string kDetect = "Print yes or no. Is there something like `{c}'?";

}  // namespace

const std::string& sampler_system_template() { return kSamplerSystem; }
const std::string& sampler_user_template() { return kSamplerUser; }
const std::string& augment_template() { return kAugment; }
const std::string& detect_template() { return kDetect; }

std::string make_user_prompt(const std::string& raw) {
    std::string p = trim(raw);
    if (p.empty()) throw std::invalid_argument("user prompt is empty");
    return p;
}

ChatPrompt build_sampler_prompt(const ConceptDatabase& db, const std::string& p, int k) {
    if (k < 1 || size_t(k) > db.size())
        throw std::invalid_argument("k out of range [1, N]: k=" + std::to_string(k) +
                                    ", N=" + std::to_string(db.size()));
    const std::string prompt = make_user_prompt(p);
    ChatPrompt out;
    out.system = render_template(kSamplerSystem, {{"n", std::to_string(db.size())},
                                                  {"concepts", join(db.concepts(), "\n")},
                                                  {"p", prompt},
                                                  {"k", std::to_string(k)}});
    out.user = render_template(kSamplerUser, {{"k", std::to_string(k)}});
    return out;
}

SampledConcepts parse_sampled_concepts(const std::string& llm_text, const ConceptDatabase& db,
                                       int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    SampledConcepts out;
    out.source_fingerprint = db.fingerprint();
    std::set<int> used;
    size_t pos = 0;
    while (out.concepts.size() < size_t(k)) {
        const size_t open = llm_text.find("<a>", pos);
        if (open == std::string::npos) break;
        const size_t close = llm_text.find("</a>", open + 3);
        if (close == std::string::npos) break;
        const std::string candidate = llm_text.substr(open + 3, close - open - 3);
        pos = close + 4;
        const int idx = db.find_canonical(candidate);
        if (idx >= 0 && used.insert(idx).second) out.concepts.push_back(db.at(size_t(idx)));
    }
    if (out.concepts.empty())
        throw ParseError("no database concepts found between <a> and </a> tags");
    return out;
}

AugmentedPrompt build_augmented_prompt(const std::string& p, const SampledConcepts& sampled) {
    const std::string prompt = make_user_prompt(p);
    AugmentedPrompt out;
    out.k = int(sampled.concepts.size());
    if (out.k == 0) {
        out.text = prompt;
        return out;
    }
    out.text = render_template(
        kAugment, {{"p", prompt}, {"concepts", join(sampled.concepts, " \n")}});
    return out;
}

std::string build_detection_query(const std::string& concept_text) {
    if (concept_text.empty()) throw std::invalid_argument("concept is empty");
    return render_template(kDetect, {{"c", concept_text}});
}

std::string render_tagged_concepts(const std::vector<std::string>& concepts) {
    std::string out;
    for (const auto& c : concepts) out += "<a>" + c + "</a>";
    return out;
}

}  // namespace iconmark
