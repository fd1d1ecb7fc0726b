#pragma once

#include <memory>
#include <string>

#include "iconmark/backends.hpp"

namespace iconmark {

// OpenAI-compatible wire protocol (see docs/backends.md):
//   chat/VLM : POST {endpoint}/v1/chat/completions
//   generate : POST {endpoint}/v1/images/generations   (b64 PNG reply)
//   regen    : POST {endpoint}/v1/images/edits         (b64 PNG in/out, steps)
//   embed    : POST {endpoint}/v1/embeddings
// Transport errors and 5xx are retried with exponential backoff up to
// cfg.max_retries; 4xx fail immediately.

class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg);
    std::string chat_complete(const std::string& system, const std::string& user,
                              std::uint64_t seed) override;
    std::string id() const override;

private:
    BackendConfig cfg_;
};

class HttpImageGenBackend final : public ImageGenBackend {
public:
    explicit HttpImageGenBackend(BackendConfig cfg);
    ImageRaster generate_image(const std::string& prompt, std::uint64_t seed) override;
    std::string id() const override;

private:
    BackendConfig cfg_;
};

class HttpVlmBackend final : public VlmBackend {
public:
    explicit HttpVlmBackend(BackendConfig cfg);
    VlmReply vlm_yes_no(const ImageRaster& image, const std::string& query,
                        std::uint64_t seed) override;
    std::string id() const override;

private:
    BackendConfig cfg_;
};

class HttpRegenBackend final : public RegenBackend {
public:
    explicit HttpRegenBackend(BackendConfig cfg);
    ImageRaster regenerate(const ImageRaster& image, int steps, std::uint64_t seed) override;
    bool proxy() const override { return false; }
    std::string id() const override;

private:
    BackendConfig cfg_;
};

class HttpEmbedBackend final : public EmbedBackend {
public:
    explicit HttpEmbedBackend(BackendConfig cfg);
    std::vector<double> embed_text(const std::string& text) override;
    std::vector<double> embed_image(const ImageRaster& image) override;
    std::string id() const override;

private:
    BackendConfig cfg_;
};

// POST with retry policy shared by all HTTP backends; returns the response
// body. Exposed for focused transport tests.
std::string http_post_json(const BackendConfig& cfg, const std::string& path,
                           const std::string& body);

}  // namespace iconmark
