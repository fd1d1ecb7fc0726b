#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iconmark/backends.hpp"
#include "iconmark/baseline_wm.hpp"
#include "iconmark/concept_db.hpp"
#include "iconmark/image.hpp"
#include "iconmark/prompting.hpp"

namespace iconmark {

// The model roles one run needs; non-owning, any unused role may be null.
struct PipelineBackends {
    ChatBackend* sampler = nullptr;
    ImageGenBackend* generator = nullptr;
    VlmBackend* vlm = nullptr;
    RegenBackend* regen = nullptr;
    EmbedBackend* embedder = nullptr;
};

struct WatermarkedImageRecord {
    std::string image_id;
    std::string prompt;             // p
    std::string augmented_prompt;   // p~_k
    std::vector<std::string> concepts;
    int k = 0;                      // == concepts.size()
    int k_requested = 0;
    std::uint64_t seed = 0;
    std::string db_fingerprint;
    std::string sampler_backend;    // empty for k == 0
    std::string generator_backend;
    std::string timestamp;
    ImageRaster image;              // pixels live next to the record as PNG

    // Provenance only; pixels are not serialized here.
    std::string to_json() const;
    static WatermarkedImageRecord from_json(const std::string& text);
};

struct DetectionResult {
    int score = 0;
    std::vector<bool> verdicts;  // aligned with database order
    int anomalies = 0;
    std::optional<double> tau;
    std::optional<bool> classification;  // score > tau when tau present
};

inline constexpr int kSamplerAttempts = 3;

// k >= 1: sampler prompt -> parse (retrying while the reply yields fewer than
// k concepts, keeping the largest set) -> augmented prompt -> generator.
// k == 0: generator on p directly.
WatermarkedImageRecord generate_watermarked(const std::string& p, int k, const ConceptDatabase& db,
                                            const PipelineBackends& backends, std::uint64_t seed);

// Queries every database concept (the detector knows only D and x); verdicts
// are order-stabilized by database index regardless of parallelism.
DetectionResult detect_score(const ImageRaster& x, const ConceptDatabase& db, VlmBackend& vlm,
                             unsigned parallelism = 1,
                             std::optional<double> tau = std::nullopt);

inline bool classify(double score, double tau) { return score > tau; }

struct HybridConfig {
    WatermarkKey key;
    EmbedParams params;
    double tau_concept = 0.0;
    double tau_bits = 0.0;
};

struct HybridResult {
    DetectionResult concept_result;  // raw score kept for metric fusion
    double bit_score = 0.0;
    bool concept_detected = false;
    bool bit_detected = false;
    bool detected = false;  // OR rule
};

HybridResult detect_hybrid(const ImageRaster& x, const ConceptDatabase& db, VlmBackend& vlm,
                           const HybridConfig& config, unsigned parallelism = 1);

}  // namespace iconmark
