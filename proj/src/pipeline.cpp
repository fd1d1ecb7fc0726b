#include "iconmark/pipeline.hpp"

#include <atomic>
#include <stdexcept>

#include <json.hpp>

#include "iconmark/parallel.hpp"
#include "iconmark/rng.hpp"
#include "iconmark/strutil.hpp"

namespace iconmark {

using nlohmann::json;

std::string WatermarkedImageRecord::to_json() const {
    json doc;
    doc["image_id"] = image_id;
    doc["prompt"] = prompt;
    doc["augmented_prompt"] = augmented_prompt;
    doc["concepts"] = concepts;
    doc["k"] = k;
    doc["k_requested"] = k_requested;
    doc["seed"] = seed;
    doc["db_fingerprint"] = db_fingerprint;
    doc["sampler_backend"] = sampler_backend;
    doc["generator_backend"] = generator_backend;
    doc["timestamp"] = timestamp;
    return doc.dump(2) + "\n";
}

WatermarkedImageRecord WatermarkedImageRecord::from_json(const std::string& text) {
    json doc = json::parse(text);
    WatermarkedImageRecord rec;
    rec.image_id = doc.at("image_id").get<std::string>();
    rec.prompt = doc.at("prompt").get<std::string>();
    rec.augmented_prompt = doc.at("augmented_prompt").get<std::string>();
    rec.concepts = doc.at("concepts").get<std::vector<std::string>>();
    rec.k = doc.at("k").get<int>();
    rec.k_requested = doc.at("k_requested").get<int>();
    rec.seed = doc.at("seed").get<std::uint64_t>();
    rec.db_fingerprint = doc.at("db_fingerprint").get<std::string>();
    rec.sampler_backend = doc.at("sampler_backend").get<std::string>();
    rec.generator_backend = doc.at("generator_backend").get<std::string>();
    rec.timestamp = doc.at("timestamp").get<std::string>();
    if (rec.k != static_cast<int>(rec.concepts.size()))
        throw std::runtime_error("record k does not match concept count");
    return rec;
}

WatermarkedImageRecord generate_watermarked(const std::string& p, int k, const ConceptDatabase& db,
                                            const PipelineBackends& backends, std::uint64_t seed) {
    if (k < 0 || static_cast<size_t>(k) > db.size())
        throw std::invalid_argument("k must be in [0, N]");
    if (!backends.generator) throw std::invalid_argument("generator backend required");
    const std::string prompt = make_user_prompt(p);

    WatermarkedImageRecord rec;
    rec.prompt = prompt;
    rec.k_requested = k;
    rec.seed = seed;
    rec.db_fingerprint = db.fingerprint();
    rec.generator_backend = backends.generator->id();

    SampledConcepts sampled;
    sampled.source_fingerprint = db.fingerprint();
    if (k >= 1) {
        if (!backends.sampler) throw std::invalid_argument("sampler backend required for k >= 1");
        rec.sampler_backend = backends.sampler->id();
        const ChatPrompt chat = build_sampler_prompt(db, prompt, k);
        std::string last_error = "sampler produced no concepts";
        // Retry while the reply parses to fewer than k concepts; keep the
        // largest set rather than failing a near-miss.
        for (int attempt = 0; attempt < kSamplerAttempts; ++attempt) {
            const std::uint64_t chat_seed =
                hash64({seed, hash64_str("sampler"), static_cast<std::uint64_t>(attempt)});
            try {
                const std::string reply = backends.sampler->chat_complete(chat.system, chat.user,
                                                                          chat_seed);
                SampledConcepts got = parse_sampled_concepts(reply, db, k);
                if (got.concepts.size() > sampled.concepts.size()) sampled = std::move(got);
                if (sampled.concepts.size() >= static_cast<size_t>(k)) break;
            } catch (const ParseError& e) {
                last_error = e.what();
            }
        }
        if (sampled.concepts.empty()) throw ParseError(last_error);
    }

    const AugmentedPrompt augmented = build_augmented_prompt(prompt, sampled);
    rec.augmented_prompt = augmented.text;
    rec.concepts = sampled.concepts;
    rec.k = static_cast<int>(sampled.concepts.size());
    rec.image = backends.generator->generate_image(augmented.text, seed);
    rec.timestamp = iso8601_utc_now();
    return rec;
}

DetectionResult detect_score(const ImageRaster& x, const ConceptDatabase& db, VlmBackend& vlm,
                             unsigned parallelism, std::optional<double> tau) {
    check_raster(x);
    const size_t n = db.size();
    DetectionResult result;
    result.verdicts.assign(n, false);
    std::vector<std::uint8_t> anomalies(n, 0);
    std::vector<std::uint8_t> hits(n, 0);
    // Seed 0 on every query: detection is a pure function of (image, query),
    // so repeated passes resolve to the same cache entries.
    parallel_for(n, parallelism, [&](size_t i) {
        const VlmReply reply = vlm.vlm_yes_no(x, build_detection_query(db.at(i)), 0);
        hits[i] = reply.verdict ? 1 : 0;
        anomalies[i] = reply.anomalous ? 1 : 0;
    });
    for (size_t i = 0; i < n; ++i) {
        result.verdicts[i] = hits[i] != 0;
        result.score += hits[i];
        result.anomalies += anomalies[i];
    }
    if (tau) {
        result.tau = tau;
        result.classification = classify(result.score, *tau);
    }
    return result;
}

HybridResult detect_hybrid(const ImageRaster& x, const ConceptDatabase& db, VlmBackend& vlm,
                           const HybridConfig& config, unsigned parallelism) {
    HybridResult hybrid;
    hybrid.concept_result = detect_score(x, db, vlm, parallelism, config.tau_concept);
    hybrid.bit_score = bit_score(extract_bits(x, config.params), config.key);
    hybrid.concept_detected = *hybrid.concept_result.classification;
    hybrid.bit_detected = hybrid.bit_score > config.tau_bits;
    hybrid.detected = hybrid.concept_detected || hybrid.bit_detected;
    return hybrid;
}

}  // namespace iconmark
