#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <httplib.h>
#include <json.hpp>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "iconmark/backends.hpp"
#include "iconmark/base64.hpp"
#include "iconmark/concept_db.hpp"
#include "iconmark/http_backend.hpp"
#include "iconmark/image.hpp"
#include "iconmark/mock_backend.hpp"
#include "iconmark/prompting.hpp"
#include "iconmark/rng.hpp"
#include "iconmark/strutil.hpp"

using namespace iconmark;
using nlohmann::json;

namespace {

const std::vector<std::string> kDb = {"a tree", "a mountain", "a brass table lamp",
                                      "a wooden fence", "a red acoustic guitar"};

MockWorldConfig small_world(std::uint64_t seed = 1, double epsilon = 0.0,
                            double contamination = 0.0) {
    MockWorldConfig cfg;
    cfg.world_seed = seed;
    cfg.epsilon = epsilon;
    cfg.contamination = contamination;
    cfg.database_concepts = kDb;
    cfg.image_width = 64;
    cfg.image_height = 64;
    return cfg;
}

// Local OpenAI-compatible stub for transport tests.
struct TestServer {
    httplib::Server svr;
    int port = 0;
    std::thread thread;

    void start() {
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
    ~TestServer() {
        svr.stop();
        if (thread.joinable()) thread.join();
    }
};

BackendConfig local_cfg(const TestServer& server, const std::string& model) {
    BackendConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.model = model;
    cfg.api_key_env = "ICONMARK_TEST_KEY";
    cfg.timeout_s = 5.0;
    cfg.max_retries = 2;
    return cfg;
}

std::string chat_content_reply(const std::string& content) {
    json j;
    j["choices"] = json::array({json{{"message", json{{"content", content}}}}});
    return j.dump();
}

}  // namespace

TEST_CASE("parse_yes_no handles punctuation, casing, and prefixes") {
    CHECK(parse_yes_no("yes") == YesNo::yes);
    CHECK(parse_yes_no("Yes.") == YesNo::yes);
    CHECK(parse_yes_no("  YES, there is") == YesNo::yes);
    CHECK(parse_yes_no("\"Yes\"") == YesNo::yes);
    CHECK(parse_yes_no("no") == YesNo::no);
    CHECK(parse_yes_no("No, nothing like that.") == YesNo::no);
    CHECK(parse_yes_no("nope") == YesNo::no);
    CHECK(parse_yes_no("maybe") == YesNo::unparseable);
    CHECK(parse_yes_no("") == YesNo::unparseable);
    CHECK(parse_yes_no("123") == YesNo::unparseable);
    CHECK(parse_yes_no("?!") == YesNo::unparseable);
}

TEST_CASE("BackendConfig validation") {
    BackendConfig cfg;
    cfg.endpoint = "http://localhost:1";
    cfg.model = "m";
    CHECK_NOTHROW(cfg.validate());
    BackendConfig bad = cfg;
    bad.timeout_s = 0.0;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.max_retries = -1;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.max_tokens = 0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("mock sampler answers its own prompt with k database members") {
    MockWorld world(small_world());
    const ConceptDatabase db(kDb);
    const ChatPrompt prompt = build_sampler_prompt(db, "A small kitten is sitting in a bowl.", 3);
    const std::string reply = world.sampler().chat_complete(prompt.system, prompt.user, 0);
    const SampledConcepts sampled = parse_sampled_concepts(reply, db, 3);
    CHECK(sampled.concepts.size() == 3);
    std::set<std::string> unique(sampled.concepts.begin(), sampled.concepts.end());
    CHECK(unique.size() == 3);
    for (const auto& c : sampled.concepts) CHECK(db.contains(c));

    // Deterministic in (world_seed, prompt); sensitive to both.
    CHECK(world.sampler().chat_complete(prompt.system, prompt.user, 99) == reply);
    MockWorld other(small_world(2));
    const ChatPrompt p2 = build_sampler_prompt(db, "A dog runs across a beach.", 3);
    CHECK(world.sampler().chat_complete(p2.system, p2.user, 0) != reply);
    CHECK_THROWS(world.sampler().chat_complete("What is 2+2?", "answer", 0));
}

TEST_CASE("mock generator scenes mirror the augmented prompt exactly") {
    MockWorld world(small_world());
    SampledConcepts sampled;
    sampled.concepts = {"a tree", "a brass table lamp", "a wooden fence"};
    const AugmentedPrompt aug = build_augmented_prompt("A small kitten.", sampled);
    const ImageRaster img = world.generator().generate_image(aug.text, 5);
    REQUIRE(img.scene.has_value());
    CHECK(img.scene->concepts == sampled.concepts);
    CHECK(img.scene->prompt == aug.text);
    CHECK(img.scene->seed == 5);
    CHECK(img.width == 64);
    CHECK(img.height == 64);

    // Same (prompt, seed) -> identical pixels; new seed -> new rendering.
    CHECK(world.generator().generate_image(aug.text, 5).data == img.data);
    CHECK(world.generator().generate_image(aug.text, 6).data != img.data);
}

TEST_CASE("mock generator renders within the clipping-safe band") {
    MockWorld world(small_world());
    const ImageRaster img = world.generator().generate_image("A plain skyline.", 3);
    for (auto v : img.data) {
        CHECK(v >= 40);
        CHECK(v <= 215);
    }
}

TEST_CASE("plain-prompt scenes draw only distractors when contamination is zero") {
    MockWorld world(small_world());
    const auto& vocab = MockWorld::distractor_vocabulary();
    const std::set<std::string> vocab_set(vocab.begin(), vocab.end());
    size_t total = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ImageRaster img = world.generator().generate_image("A quiet street corner.", seed);
        REQUIRE(img.scene.has_value());
        CHECK(img.scene->concepts.size() <= 2);
        for (const auto& c : img.scene->concepts) {
            CHECK(vocab_set.count(c) == 1);
            total++;
        }
    }
    CHECK(total > 0);  // distractors do appear across seeds
}

TEST_CASE("distractor vocabulary is disjoint from the shipped database") {
    const auto& vocab = MockWorld::distractor_vocabulary();
    CHECK(vocab.size() == 60);
    std::set<std::string> canon;
    for (const auto& v : vocab) canon.insert(canonical_concept(v));
    CHECK(canon.size() == vocab.size());

    const ConceptDatabase db =
        load_concept_db(std::string(ICONMARK_SOURCE_DIR) + "/data/concepts/default100.txt");
    for (const auto& v : vocab) CHECK(!db.contains(v));
}

TEST_CASE("contamination injects database concepts at the configured rate") {
    MockWorld always(small_world(1, 0.0, 1.0));
    const std::set<std::string> db_set(kDb.begin(), kDb.end());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ImageRaster img = always.generator().generate_image("A quiet street corner.", seed);
        size_t db_hits = 0;
        for (const auto& c : img.scene->concepts) db_hits += db_set.count(c);
        CHECK(db_hits == 1);
    }

    MockWorld sometimes(small_world(1, 0.0, 0.35));
    size_t contaminated = 0, n = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        const ImageRaster img =
            sometimes.generator().generate_image("A quiet street corner.", seed);
        size_t db_hits = 0;
        for (const auto& c : img.scene->concepts) db_hits += db_set.count(c);
        contaminated += db_hits > 0;
        ++n;
    }
    const double rate = double(contaminated) / double(n);
    CHECK(rate > 0.25);
    CHECK(rate < 0.45);
}

TEST_CASE("mock VLM reports exact scene membership at epsilon zero") {
    MockWorld world(small_world());
    SampledConcepts sampled;
    sampled.concepts = {"a tree", "a mountain"};
    const AugmentedPrompt aug = build_augmented_prompt("A field.", sampled);
    const ImageRaster img = world.generator().generate_image(aug.text, 9);
    for (const auto& c : kDb) {
        const VlmReply r = world.vlm().vlm_yes_no(img, build_detection_query(c), 0);
        const bool expected =
            std::find(sampled.concepts.begin(), sampled.concepts.end(), c) !=
            sampled.concepts.end();
        CHECK(r.verdict == expected);
        CHECK(!r.anomalous);
    }
    // Canonicalization applies: spacing/case variants of a present concept hit.
    CHECK(world.vlm().vlm_yes_no(img, build_detection_query("A  TREE"), 0).verdict);
    // Images without a scene record contain nothing.
    const ImageRaster bare = make_raster(64, 64);
    CHECK(!world.vlm().vlm_yes_no(bare, build_detection_query("a tree"), 0).verdict);
    CHECK_THROWS(world.vlm().vlm_yes_no(img, "", 0));
}

TEST_CASE("epsilon flips verdicts at the configured rate, deterministically") {
    MockWorld clean(small_world(1, 0.0));
    MockWorld noisy(small_world(1, 0.2));
    MockWorld inverted(small_world(1, 1.0));

    size_t flips = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const ImageRaster img =
            clean.generator().generate_image("Scene " + std::to_string(seed), seed);
        for (const auto& c : kDb) {
            const std::string q = build_detection_query(c);
            const bool base = clean.vlm().vlm_yes_no(img, q, 1).verdict;
            const bool noisy_v = noisy.vlm().vlm_yes_no(img, q, 1).verdict;
            const bool noisy_v2 = noisy.vlm().vlm_yes_no(img, q, 1).verdict;
            CHECK(noisy_v == noisy_v2);  // same query+seed -> same verdict
            CHECK(inverted.vlm().vlm_yes_no(img, q, 1).verdict == !base);
            flips += noisy_v != base;
            ++total;
        }
    }
    const double rate = double(flips) / double(total);  // 200 Bernoulli(0.2) draws
    CHECK(rate > 0.10);
    CHECK(rate < 0.30);
}

TEST_CASE("mock regen is a flagged proxy that degrades pixels but keeps the scene") {
    MockWorld world(small_world());
    const ImageRaster img = world.generator().generate_image("A pond.", 2);
    CHECK(world.regen().proxy());
    const ImageRaster out = world.regen().regenerate(img, 300, 4);
    CHECK(out.data != img.data);
    CHECK(out.width == img.width);
    REQUIRE(out.scene.has_value());
    CHECK(out.scene->prompt == img.scene->prompt);
    CHECK(world.regen().regenerate(img, 300, 4).data == out.data);
    CHECK(world.regen().regenerate(img, 300, 5).data != out.data);
}

TEST_CASE("mock embedder yields deterministic unit vectors") {
    MockWorld world(small_world());
    const auto v1 = world.embedder().embed_text("a tree");
    const auto v2 = world.embedder().embed_text("a tree");
    const auto v3 = world.embedder().embed_text("a mountain");
    CHECK(v1 == v2);
    CHECK(v1 != v3);
    REQUIRE(v1.size() == 64);
    double norm = 0.0;
    for (double x : v1) norm += x * x;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));

    const ImageRaster img = world.generator().generate_image("A pond.", 2);
    const auto iv = world.embedder().embed_image(img);
    CHECK(iv.size() == v1.size());
    CHECK(world.embedder().embed_image(img) == iv);
}

TEST_CASE("mock world validates its configuration") {
    MockWorldConfig bad = small_world();
    bad.epsilon = 1.5;
    CHECK_THROWS(MockWorld{bad});
    bad = small_world();
    bad.contamination = -0.1;
    CHECK_THROWS(MockWorld{bad});
}

TEST_CASE("backend ids encode the knobs that change behavior") {
    MockWorld a(small_world(1, 0.0));
    MockWorld b(small_world(2, 0.0));
    MockWorld c(small_world(1, 0.3));
    CHECK(a.sampler().id() != b.sampler().id());
    CHECK(a.vlm().id() != c.vlm().id());
    CHECK(a.vlm().id() == MockWorld(small_world(1, 0.0)).vlm().id());
}

TEST_CASE("http chat backend sends the OpenAI-compatible body and auth header") {
    TestServer server;
    json captured;
    std::string auth_header;
    server.svr.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                                httplib::Response& res) {
        captured = json::parse(req.body);
        auth_header = req.get_header_value("Authorization");
        res.set_content(chat_content_reply("<a>a tree</a>"), "application/json");
    });
    server.start();

    setenv("ICONMARK_TEST_KEY", "secret-token", 1);
    HttpChatBackend chat(local_cfg(server, "llama-test"));
    const std::string reply = chat.chat_complete("sys text", "user text", 41);
    CHECK(reply == "<a>a tree</a>");
    CHECK(captured["model"] == "llama-test");
    REQUIRE(captured["messages"].size() == 2);
    CHECK(captured["messages"][0]["role"] == "system");
    CHECK(captured["messages"][0]["content"] == "sys text");
    CHECK(captured["messages"][1]["role"] == "user");
    CHECK(captured["messages"][1]["content"] == "user text");
    CHECK(captured["temperature"] == 0.0);
    CHECK(captured["max_tokens"] == 512);
    CHECK(captured["seed"] == 41);
    CHECK(auth_header == "Bearer secret-token");

    unsetenv("ICONMARK_TEST_KEY");
    chat.chat_complete("s", "u", 0);
    CHECK(auth_header.empty());  // header omitted without a key
    CHECK(chat.id().find("llama-test") != std::string::npos);
}

TEST_CASE("http transport retries 5xx and fails fast on 4xx") {
    TestServer server;
    std::atomic<int> hits{0};
    server.svr.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int n = ++hits;
        if (n <= 2) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
        } else {
            res.set_content(chat_content_reply("yes"), "application/json");
        }
    });
    server.svr.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 404;
        res.set_content("no such model", "text/plain");
    });
    server.start();

    BackendConfig cfg = local_cfg(server, "m");
    HttpChatBackend chat(cfg);
    CHECK(chat.chat_complete("s", "u", 0) == "yes");  // 500, 500, then 200
    CHECK(hits.load() == 3);

    hits = 0;
    BackendConfig no_retry = cfg;
    no_retry.max_retries = 0;
    HttpChatBackend strict(no_retry);
    CHECK_THROWS_WITH_AS(strict.chat_complete("s", "u", 0),
                         doctest::Contains("unreachable after 1 attempts"), std::runtime_error);
    CHECK(hits.load() == 1);

    hits = 0;
    HttpEmbedBackend embed(cfg);  // 404 must not retry
    CHECK_THROWS_WITH_AS(embed.embed_text("t"), doctest::Contains("HTTP 404"),
                         std::runtime_error);
    CHECK(hits.load() == 1);
}

TEST_CASE("http image generation and regeneration round trip b64 PNG payloads") {
    ImageRaster canned = make_raster(32, 32);
    Rng rng(5);
    for (auto& v : canned.data) v = (unsigned char)(rng.uniform_int(0, 255));
    const std::string b64 = base64_encode(encode_png(canned));

    TestServer server;
    json gen_req, edit_req;
    server.svr.Post("/v1/images/generations",
                    [&](const httplib::Request& req, httplib::Response& res) {
                        gen_req = json::parse(req.body);
                        json j;
                        j["data"] = json::array({json{{"b64_json", b64}}});
                        res.set_content(j.dump(), "application/json");
                    });
    server.svr.Post("/v1/images/edits", [&](const httplib::Request& req, httplib::Response& res) {
        edit_req = json::parse(req.body);
        json j;
        j["data"] = json::array({json{{"b64_json", b64}}});
        res.set_content(j.dump(), "application/json");
    });
    server.start();

    HttpImageGenBackend gen(local_cfg(server, "sd-test"));
    const ImageRaster got = gen.generate_image("a tree on a hill", 17);
    CHECK(got.data == canned.data);
    CHECK(gen_req["model"] == "sd-test");
    CHECK(gen_req["prompt"] == "a tree on a hill");
    CHECK(gen_req["seed"] == 17);
    CHECK(gen_req["response_format"] == "b64_json");

    HttpRegenBackend regen(local_cfg(server, "img2img-test"));
    CHECK(!regen.proxy());
    const ImageRaster edited = regen.regenerate(canned, 300, 3);
    CHECK(edited.data == canned.data);
    CHECK(edit_req["steps"] == 300);
    CHECK(edit_req["seed"] == 3);
    const ImageRaster sent = decode_png(base64_decode(edit_req["image"].get<std::string>()));
    CHECK(sent.data == canned.data);
}

TEST_CASE("http VLM sends a data-URL image part and parses the verdict") {
    TestServer server;
    json captured;
    server.svr.Post("/v1/chat/completions",
                    [&](const httplib::Request& req, httplib::Response& res) {
                        captured = json::parse(req.body);
                        res.set_content(chat_content_reply("Yes, clearly."), "application/json");
                    });
    server.start();

    HttpVlmBackend vlm(local_cfg(server, "vlm-test"));
    const ImageRaster img = make_raster(32, 32);
    const VlmReply r = vlm.vlm_yes_no(img, "Print yes or no. Is there something like `a tree'?", 6);
    CHECK(r.verdict);
    CHECK(!r.anomalous);
    CHECK(r.raw == "Yes, clearly.");
    CHECK(captured["max_tokens"] == 16);
    CHECK(captured["seed"] == 6);
    REQUIRE(captured["messages"].size() == 1);
    const auto& content = captured["messages"][0]["content"];
    REQUIRE(content.size() == 2);
    CHECK(content[0]["type"] == "text");
    CHECK(content[1]["type"] == "image_url");
    const std::string url = content[1]["image_url"]["url"].get<std::string>();
    const std::string prefix = "data:image/png;base64,";
    REQUIRE(url.rfind(prefix, 0) == 0);
    CHECK(decode_png(base64_decode(url.substr(prefix.size()))).data == img.data);
}

TEST_CASE("http embeddings parse the vector payload") {
    TestServer server;
    server.svr.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        json j;
        j["data"] = json::array({json{{"embedding", std::vector<double>{0.6, 0.8}}}});
        res.set_content(j.dump(), "application/json");
    });
    server.start();
    HttpEmbedBackend embed(local_cfg(server, "clip-test"));
    CHECK(embed.embed_text("a tree") == std::vector<double>{0.6, 0.8});
    CHECK(embed.embed_image(make_raster(24, 24)) == std::vector<double>{0.6, 0.8});
}

TEST_CASE("malformed response bodies raise descriptive errors") {
    TestServer server;
    server.svr.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"choices\":[]}", "application/json");
    });
    server.start();
    HttpChatBackend chat(local_cfg(server, "m"));
    CHECK_THROWS_WITH_AS(chat.chat_complete("s", "u", 0), doctest::Contains("malformed chat"),
                         std::runtime_error);
}

TEST_CASE("unreachable endpoints surface transport errors") {
    BackendConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1";  // nothing listens on port 1
    cfg.model = "m";
    cfg.timeout_s = 2.0;
    cfg.max_retries = 0;
    HttpChatBackend chat(cfg);
    CHECK_THROWS_WITH_AS(chat.chat_complete("s", "u", 0), doctest::Contains("unreachable"),
                         std::runtime_error);
}
