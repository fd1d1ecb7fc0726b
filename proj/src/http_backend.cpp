#include "iconmark/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "iconmark/base64.hpp"

namespace iconmark {

using nlohmann::json;

namespace {

std::string bearer_token(const BackendConfig& cfg) {
    if (cfg.api_key_env.empty()) return {};
    const char* v = std::getenv(cfg.api_key_env.c_str());
    return v ? std::string(v) : std::string();
}

std::string png_data_url(const ImageRaster& img) {
    return "data:image/png;base64," + base64_encode(encode_png(img));
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed backend response: ") + e.what());
    }
}

}  // namespace

std::string http_post_json(const BackendConfig& cfg, const std::string& path,
                           const std::string& body) {
    cfg.validate();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(50LL << (attempt - 1)));
        httplib::Client client(cfg.endpoint);
        client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
        client.set_write_timeout(std::chrono::duration<double>(cfg.timeout_s));
        httplib::Headers headers;
        const std::string token = bearer_token(cfg);
        if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;  // retryable
        }
        if (res->status >= 500) {
            last_error = "server error: HTTP " + std::to_string(res->status);
            continue;  // retryable
        }
        if (res->status != 200)
            throw std::runtime_error("backend request failed: HTTP " +
                                     std::to_string(res->status) + " body: " + res->body);
        return res->body;
    }
    throw std::runtime_error("backend unreachable after " + std::to_string(cfg.max_retries + 1) +
                             " attempts: " + last_error);
}

HttpChatBackend::HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string HttpChatBackend::chat_complete(const std::string& system, const std::string& user,
                                           std::uint64_t seed) {
    json req;
    req["model"] = cfg_.model;
    req["messages"] = json::array({json{{"role", "system"}, {"content", system}},
                                   json{{"role", "user"}, {"content", user}}});
    req["temperature"] = cfg_.temperature;
    req["max_tokens"] = cfg_.max_tokens;
    req["seed"] = seed;
    const json resp = parse_body(http_post_json(cfg_, "/v1/chat/completions", req.dump()));
    try {
        return resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed chat response: ") + e.what());
    }
}

std::string HttpChatBackend::id() const { return "http-chat:" + cfg_.model + "@" + cfg_.endpoint; }

HttpImageGenBackend::HttpImageGenBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

ImageRaster HttpImageGenBackend::generate_image(const std::string& prompt, std::uint64_t seed) {
    json req;
    req["model"] = cfg_.model;
    req["prompt"] = prompt;
    req["seed"] = seed;
    req["response_format"] = "b64_json";
    const json resp = parse_body(http_post_json(cfg_, "/v1/images/generations", req.dump()));
    try {
        const std::string b64 = resp.at("data").at(0).at("b64_json").get<std::string>();
        return decode_png(base64_decode(b64));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed image response: ") + e.what());
    }
}

std::string HttpImageGenBackend::id() const {
    return "http-gen:" + cfg_.model + "@" + cfg_.endpoint;
}

HttpVlmBackend::HttpVlmBackend(BackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

VlmReply HttpVlmBackend::vlm_yes_no(const ImageRaster& image, const std::string& query,
                                    std::uint64_t seed) {
    if (query.empty()) throw std::invalid_argument("empty VLM query");
    json content = json::array();
    content.push_back(json{{"type", "text"}, {"text", query}});
    content.push_back(
        json{{"type", "image_url"}, {"image_url", json{{"url", png_data_url(image)}}}});
    json req;
    req["model"] = cfg_.model;
    req["messages"] =
        json::array({json{{"role", "user"}, {"content", std::move(content)}}});
    req["temperature"] = cfg_.temperature;
    req["max_tokens"] = 16;
    req["seed"] = seed;
    const json resp = parse_body(http_post_json(cfg_, "/v1/chat/completions", req.dump()));
    VlmReply reply;
    try {
        reply.raw = resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed VLM response: ") + e.what());
    }
    const YesNo parsed = parse_yes_no(reply.raw);
    reply.verdict = parsed == YesNo::yes;
    reply.anomalous = parsed == YesNo::unparseable;
    return reply;
}

std::string HttpVlmBackend::id() const { return "http-vlm:" + cfg_.model + "@" + cfg_.endpoint; }

HttpRegenBackend::HttpRegenBackend(BackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

ImageRaster HttpRegenBackend::regenerate(const ImageRaster& image, int steps,
                                         std::uint64_t seed) {
    json req;
    req["model"] = cfg_.model;
    req["image"] = base64_encode(encode_png(image));
    req["steps"] = steps;
    req["seed"] = seed;
    req["response_format"] = "b64_json";
    const json resp = parse_body(http_post_json(cfg_, "/v1/images/edits", req.dump()));
    try {
        const std::string b64 = resp.at("data").at(0).at("b64_json").get<std::string>();
        return decode_png(base64_decode(b64));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed regen response: ") + e.what());
    }
}

std::string HttpRegenBackend::id() const {
    return "http-regen:" + cfg_.model + "@" + cfg_.endpoint;
}

HttpEmbedBackend::HttpEmbedBackend(BackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<double> HttpEmbedBackend::embed_text(const std::string& text) {
    json req;
    req["model"] = cfg_.model;
    req["input"] = json::array({text});
    const json resp = parse_body(http_post_json(cfg_, "/v1/embeddings", req.dump()));
    try {
        return resp.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed embedding response: ") + e.what());
    }
}

std::vector<double> HttpEmbedBackend::embed_image(const ImageRaster& image) {
    json req;
    req["model"] = cfg_.model;
    req["input"] = json::array({png_data_url(image)});
    const json resp = parse_body(http_post_json(cfg_, "/v1/embeddings", req.dump()));
    try {
        return resp.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed embedding response: ") + e.what());
    }
}

std::string HttpEmbedBackend::id() const {
    return "http-embed:" + cfg_.model + "@" + cfg_.endpoint;
}

}  // namespace iconmark
