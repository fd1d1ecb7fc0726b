#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iconmark/image.hpp"

namespace iconmark {

struct BackendConfig {
    std::string endpoint;                         // base URL, e.g. http://host:8080
    std::string model;                            // model identifier
    std::string api_key_env = "ICONMARK_API_KEY"; // env var holding the bearer token
    double timeout_s = 60.0;
    int max_retries = 2;
    double temperature = 0.0;
    int max_tokens = 512;

    void validate() const;  // throws std::invalid_argument
};

enum class YesNo { yes, no, unparseable };

// Lowercases, strips leading punctuation/whitespace; token starting "yes" ->
// yes, "no" -> no, anything else unparseable.
YesNo parse_yes_no(const std::string& raw);

struct VlmReply {
    bool verdict = false;
    std::string raw;
    bool anomalous = false;  // unparseable reply, counted but coerced to "not detected"
};

// Concept-sampler LLM (role L).
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat_complete(const std::string& system, const std::string& user,
                                      std::uint64_t seed) = 0;
    virtual std::string id() const = 0;
};

// Image generator (role G).
class ImageGenBackend {
public:
    virtual ~ImageGenBackend() = default;
    virtual ImageRaster generate_image(const std::string& prompt, std::uint64_t seed) = 0;
    virtual std::string id() const = 0;
};

// Detector VLM (role V).
class VlmBackend {
public:
    virtual ~VlmBackend() = default;
    virtual VlmReply vlm_yes_no(const ImageRaster& image, const std::string& query,
                                std::uint64_t seed) = 0;
    virtual std::string id() const = 0;
};

// Image-to-image regeneration endpoint (regen attack).
class RegenBackend {
public:
    virtual ~RegenBackend() = default;
    virtual ImageRaster regenerate(const ImageRaster& image, int steps, std::uint64_t seed) = 0;
    virtual bool proxy() const = 0;  // true for the offline stand-in
    virtual std::string id() const = 0;
};

// Text/image embedder for CLIP-style quality metrics.
class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    virtual std::vector<double> embed_text(const std::string& text) = 0;
    virtual std::vector<double> embed_image(const ImageRaster& image) = 0;
    virtual std::string id() const = 0;
};

}  // namespace iconmark
