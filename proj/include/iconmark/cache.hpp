#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "iconmark/backends.hpp"

namespace iconmark {

// Content-addressed response store: one JSON file per request digest.
// Concurrent readers are free; concurrent computes of the same digest
// coalesce onto a single in-flight request.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& digest);
    void put(const std::string& digest, const std::string& backend_id,
             const std::string& payload);
    std::string get_or_compute(const std::string& digest, const std::string& backend_id,
                               const std::function<std::string()>& compute);

    std::uint64_t hits() const { return hits_.load(); }
    std::uint64_t misses() const { return misses_.load(); }  // == issued backend calls

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& digest) const;

    std::filesystem::path dir_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::set<std::string> in_flight_;
    std::atomic<std::uint64_t> hits_{0}, misses_{0};
};

// SHA-256 over the canonical serialization of a request; backend identity is
// part of the digest so hits never cross backends.
std::string request_digest(const std::string& canonical_request);

// Transparent caching decorators. id() forwards to the inner backend so
// manifests and digests are stable whether or not caching is enabled.
class CachedChatBackend final : public ChatBackend {
public:
    CachedChatBackend(ChatBackend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    std::string chat_complete(const std::string& system, const std::string& user,
                              std::uint64_t seed) override;
    std::string id() const override { return inner_.id(); }

private:
    ChatBackend& inner_;
    ResponseCache& cache_;
};

class CachedImageGenBackend final : public ImageGenBackend {
public:
    CachedImageGenBackend(ImageGenBackend& inner, ResponseCache& cache)
        : inner_(inner), cache_(cache) {}
    ImageRaster generate_image(const std::string& prompt, std::uint64_t seed) override;
    std::string id() const override { return inner_.id(); }

private:
    ImageGenBackend& inner_;
    ResponseCache& cache_;
};

class CachedVlmBackend final : public VlmBackend {
public:
    CachedVlmBackend(VlmBackend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    VlmReply vlm_yes_no(const ImageRaster& image, const std::string& query,
                        std::uint64_t seed) override;
    std::string id() const override { return inner_.id(); }

private:
    VlmBackend& inner_;
    ResponseCache& cache_;
};

class CachedRegenBackend final : public RegenBackend {
public:
    CachedRegenBackend(RegenBackend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    ImageRaster regenerate(const ImageRaster& image, int steps, std::uint64_t seed) override;
    bool proxy() const override { return inner_.proxy(); }
    std::string id() const override { return inner_.id(); }

private:
    RegenBackend& inner_;
    ResponseCache& cache_;
};

class CachedEmbedBackend final : public EmbedBackend {
public:
    CachedEmbedBackend(EmbedBackend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    std::vector<double> embed_text(const std::string& text) override;
    std::vector<double> embed_image(const ImageRaster& image) override;
    std::string id() const override { return inner_.id(); }

private:
    EmbedBackend& inner_;
    ResponseCache& cache_;
};

}  // namespace iconmark
