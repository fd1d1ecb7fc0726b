#include "iconmark/cache.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "iconmark/base64.hpp"
#include "iconmark/sha256.hpp"

namespace iconmark {

using nlohmann::json;

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const std::string& digest) const {
    // Two-level fanout keeps directories small on large runs.
    return dir_ / digest.substr(0, 2) / (digest + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& digest) {
    const auto path = entry_path(digest);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    json doc = json::parse(buf.str());
    return doc.at("payload").get<std::string>();
}

void ResponseCache::put(const std::string& digest, const std::string& backend_id,
                        const std::string& payload) {
    const auto path = entry_path(digest);
    std::filesystem::create_directories(path.parent_path());
    json doc;
    doc["digest"] = digest;
    doc["backend"] = backend_id;
    doc["payload"] = payload;
    // Write-then-rename so a concurrent reader never sees a torn entry.
    const auto tmp = path.parent_path() / (digest + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cache: cannot write " + tmp.string());
        out << doc.dump();
        out.flush();
        if (!out) throw std::runtime_error("cache: short write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string ResponseCache::get_or_compute(const std::string& digest,
                                          const std::string& backend_id,
                                          const std::function<std::string()>& compute) {
    {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return in_flight_.count(digest) == 0; });
        if (auto cached = get(digest)) {
            hits_.fetch_add(1);
            return *cached;
        }
        in_flight_.insert(digest);
    }
    std::string payload;
    try {
        payload = compute();
    } catch (...) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            in_flight_.erase(digest);
        }
        cv_.notify_all();
        throw;
    }
    put(digest, backend_id, payload);
    {
        std::lock_guard<std::mutex> lock(mu_);
        in_flight_.erase(digest);
    }
    cv_.notify_all();
    misses_.fetch_add(1);
    return payload;
}

std::string request_digest(const std::string& canonical_request) {
    return sha256_hex(canonical_request);
}

namespace {

// Raster payloads round-trip through PNG plus the scene sidecar; dropping the
// sidecar would change downstream mock-VLM behavior on cache replay.
std::string raster_to_payload(const ImageRaster& image) {
    json doc;
    doc["png_b64"] = base64_encode(encode_png(image));
    if (image.scene) {
        doc["scene"] = json::parse(image.scene->to_json());
    } else {
        doc["scene"] = nullptr;
    }
    return doc.dump();
}

ImageRaster raster_from_payload(const std::string& payload) {
    json doc = json::parse(payload);
    ImageRaster image = decode_png(base64_decode(doc.at("png_b64").get<std::string>()));
    if (!doc.at("scene").is_null()) {
        image.scene = SceneRecord::from_json(doc.at("scene").dump());
    }
    return image;
}

}  // namespace

std::string CachedChatBackend::chat_complete(const std::string& system, const std::string& user,
                                             std::uint64_t seed) {
    json req;
    req["kind"] = "chat";
    req["backend"] = inner_.id();
    req["system"] = system;
    req["user"] = user;
    req["seed"] = seed;
    const std::string digest = request_digest(req.dump());
    return cache_.get_or_compute(digest, inner_.id(),
                                 [&] { return inner_.chat_complete(system, user, seed); });
}

ImageRaster CachedImageGenBackend::generate_image(const std::string& prompt, std::uint64_t seed) {
    json req;
    req["kind"] = "image_gen";
    req["backend"] = inner_.id();
    req["prompt"] = prompt;
    req["seed"] = seed;
    const std::string digest = request_digest(req.dump());
    const std::string payload = cache_.get_or_compute(
        digest, inner_.id(), [&] { return raster_to_payload(inner_.generate_image(prompt, seed)); });
    return raster_from_payload(payload);
}

VlmReply CachedVlmBackend::vlm_yes_no(const ImageRaster& image, const std::string& query,
                                      std::uint64_t seed) {
    json req;
    req["kind"] = "vlm";
    req["backend"] = inner_.id();
    req["image_sha256"] = sha256_hex(encode_png(image));
    if (image.scene) req["scene_sha256"] = sha256_hex(image.scene->to_json());
    req["query"] = query;
    req["seed"] = seed;
    const std::string digest = request_digest(req.dump());
    const std::string raw = cache_.get_or_compute(digest, inner_.id(), [&] {
        return inner_.vlm_yes_no(image, query, seed).raw;
    });
    VlmReply reply;
    reply.raw = raw;
    const YesNo verdict = parse_yes_no(raw);
    reply.anomalous = (verdict == YesNo::unparseable);
    reply.verdict = (verdict == YesNo::yes);
    return reply;
}

ImageRaster CachedRegenBackend::regenerate(const ImageRaster& image, int steps,
                                           std::uint64_t seed) {
    json req;
    req["kind"] = "regen";
    req["backend"] = inner_.id();
    req["image_sha256"] = sha256_hex(encode_png(image));
    if (image.scene) req["scene_sha256"] = sha256_hex(image.scene->to_json());
    req["steps"] = steps;
    req["seed"] = seed;
    const std::string digest = request_digest(req.dump());
    const std::string payload = cache_.get_or_compute(digest, inner_.id(), [&] {
        return raster_to_payload(inner_.regenerate(image, steps, seed));
    });
    return raster_from_payload(payload);
}

std::vector<double> CachedEmbedBackend::embed_text(const std::string& text) {
    json req;
    req["kind"] = "embed_text";
    req["backend"] = inner_.id();
    req["text"] = text;
    const std::string digest = request_digest(req.dump());
    const std::string payload = cache_.get_or_compute(digest, inner_.id(), [&] {
        return json(inner_.embed_text(text)).dump();
    });
    return json::parse(payload).get<std::vector<double>>();
}

std::vector<double> CachedEmbedBackend::embed_image(const ImageRaster& image) {
    json req;
    req["kind"] = "embed_image";
    req["backend"] = inner_.id();
    req["image_sha256"] = sha256_hex(encode_png(image));
    if (image.scene) req["scene_sha256"] = sha256_hex(image.scene->to_json());
    const std::string digest = request_digest(req.dump());
    const std::string payload = cache_.get_or_compute(digest, inner_.id(), [&] {
        return json(inner_.embed_image(image)).dump();
    });
    return json::parse(payload).get<std::vector<double>>();
}

}  // namespace iconmark
