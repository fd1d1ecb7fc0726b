#include "iconmark/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iconmark/attacks.hpp"
#include "iconmark/rng.hpp"
#include "iconmark/sha256.hpp"
#include "iconmark/strutil.hpp"

namespace iconmark {

namespace {

// 60 entries, all disjoint from the default database after canonicalization.
const std::vector<std::string> kDistractors = {
    "a dented aluminum trash can",      "a coiled green garden hose",
    "a chipped ceramic coffee mug",     "a plastic lawn flamingo",
    "a tangled string of fairy lights", "a folded plaid picnic blanket",
    "a dusty ceiling fan",              "a cracked concrete sidewalk slab",
    "a peeling wooden fence post",      "a bent bicycle wheel",
    "a faded canvas awning",            "a pile of gray gravel",
    "a rubber welcome mat",             "a leaning chain-link gate",
    "a squat orange traffic barrel",    "a frosted glass office door",
    "a humming window air conditioner", "a sagging clothesline with pins",
    "a scuffed leather work boot",      "a dripping outdoor faucet",
    "a stack of plastic patio chairs",  "a crooked mailbox on a post",
    "a torn paper grocery bag",         "a greasy metal toolbox",
    "a rolled-up foam yoga mat",        "a blinking smoke detector",
    "a wire magazine rack",             "a lumpy beanbag chair",
    "a stained porcelain sink",         "a buzzing neon open sign",
    "a squeaky metal swing set",        "a mossy birdbath pedestal",
    "a rusty wheelbarrow",              "a splintered picnic table",
    "a deflated soccer ball",           "a knotted tow rope",
    "a grimy gas station pump",         "a flickering street lamp",
    "a lopsided garden gnome",          "a barred basement window",
    "a wobbly bar stool",               "a dented filing cabinet",
    "a smudged whiteboard on wheels",   "a creaky wooden step ladder",
    "a threadbare armrest cover",       "a cluttered pegboard of tools",
    "a chalky blackboard eraser",       "a fogged bathroom mirror",
    "a jumbled drawer of cables",       "a crumpled aluminum foil sheet",
    "a half-burned wax candle",         "a dog-eared paperback thriller",
    "a mismatched pair of slippers",    "a leaky radiator valve",
    "a curled garden rake",             "a spotted banana on a counter",
    "a zip-tied bundle of rebar",       "a taped cardboard moving box",
    "a gnawed wooden pencil",           "a overturned plastic bucket"};

std::uint64_t pixel_hash(const ImageRaster& img) {
    Sha256 h;
    const std::int32_t dims[2] = {img.width, img.height};
    h.update(dims, sizeof(dims));
    h.update(img.data.data(), img.data.size());
    const auto d = h.digest();
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out = (out << 8) | d[size_t(i)];
    return out;
}

std::uint64_t scene_identity(const ImageRaster& img) {
    if (!img.scene) return pixel_hash(img);
    const SceneRecord& s = *img.scene;
    return hash64({hash64_str(s.prompt), s.seed, hash64_str(join(s.concepts, "\n"))});
}

double hash_unit(std::uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

class MockChat final : public ChatBackend {
public:
    explicit MockChat(const MockWorldConfig& cfg) : cfg_(cfg) {}

    std::string chat_complete(const std::string& system, const std::string& user,
                              std::uint64_t /*seed*/) override {
        // Recognize the concept-sampler prompt shape and answer with the
        // world's top-k relevance ranking.
        (void)user;
        const std::string head = "Here is a database of ";
        if (system.rfind(head, 0) != 0)
            throw std::runtime_error("mock chat backend only understands sampler prompts");
        const size_t list_start = system.find("\n\n");
        const std::string marker = "\n\nIn an image of `";
        const size_t list_end = system.find(marker);
        if (list_start == std::string::npos || list_end == std::string::npos ||
            list_end <= list_start)
            throw std::runtime_error("mock chat backend: malformed sampler prompt");
        const auto concepts = split_lines(system.substr(list_start + 2, list_end - list_start - 2));

        const size_t p_start = list_end + marker.size();
        const std::string p_marker = "', what are the top ";
        const size_t p_end = system.find(p_marker, p_start);
        if (p_end == std::string::npos)
            throw std::runtime_error("mock chat backend: malformed sampler prompt");
        const std::string p = system.substr(p_start, p_end - p_start);
        const size_t k_start = p_end + p_marker.size();
        const size_t k_end = system.find(' ', k_start);
        const int k = std::stoi(system.substr(k_start, k_end - k_start));

        std::vector<std::pair<std::uint64_t, size_t>> ranked;
        ranked.reserve(concepts.size());
        for (size_t i = 0; i < concepts.size(); ++i)
            ranked.emplace_back(relevance(p, concepts[i]), i);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });

        std::string reply;
        for (int i = 0; i < k && size_t(i) < ranked.size(); ++i) {
            if (i) reply += "\n";
            reply += "<a>" + concepts[ranked[size_t(i)].second] + "</a>";
        }
        return reply;
    }

    std::string id() const override {
        return "mock-chat:w" + std::to_string(cfg_.world_seed);
    }

    std::uint64_t relevance(const std::string& p, const std::string& c) const {
        return hash64({cfg_.world_seed, hash64_str("relevance"),
                       hash64_str(canonical_concept(p)), hash64_str(canonical_concept(c))});
    }

private:
    const MockWorldConfig& cfg_;
};

class MockGen final : public ImageGenBackend {
public:
    explicit MockGen(const MockWorldConfig& cfg) : cfg_(cfg) {}

    ImageRaster generate_image(const std::string& prompt, std::uint64_t seed) override {
        SceneRecord scene;
        scene.prompt = prompt;
        scene.seed = seed;

        const std::string marker = " in the foreground. add following: \n";
        const std::string suffix = ". \n\n sharp, detailed.";
        const size_t mpos = prompt.find(marker);
        if (mpos != std::string::npos && prompt.size() >= suffix.size() &&
            prompt.compare(prompt.size() - suffix.size(), suffix.size(), suffix) == 0) {
            // Watermarked prompt: the scene contains exactly the listed concepts.
            const size_t body_start = mpos + marker.size();
            const std::string body =
                prompt.substr(body_start, prompt.size() - suffix.size() - body_start);
            size_t pos = 0;
            while (pos <= body.size()) {
                const size_t next = body.find(" \n", pos);
                const std::string c =
                    next == std::string::npos ? body.substr(pos) : body.substr(pos, next - pos);
                if (!c.empty()) scene.concepts.push_back(c);
                if (next == std::string::npos) break;
                pos = next + 2;
            }
        } else {
            // Plain prompt: 0-2 distractors, optionally a contaminating
            // database concept.
            Rng rng(hash64({cfg_.world_seed, hash64_str("distractors"),
                            hash64_str(canonical_concept(prompt)), seed}));
            const auto& vocab = MockWorld::distractor_vocabulary();
            const int n = int(rng.uniform_int(0, 2));
            std::vector<size_t> picked;
            while (int(picked.size()) < n) {
                const size_t idx = size_t(rng.uniform_int(0, std::int64_t(vocab.size()) - 1));
                if (std::find(picked.begin(), picked.end(), idx) == picked.end())
                    picked.push_back(idx);
            }
            for (size_t idx : picked) scene.concepts.push_back(vocab[idx]);
            if (!cfg_.database_concepts.empty() && rng.bernoulli(cfg_.contamination)) {
                const size_t idx =
                    size_t(rng.uniform_int(0, std::int64_t(cfg_.database_concepts.size()) - 1));
                scene.concepts.push_back(cfg_.database_concepts[idx]);
            }
        }

        ImageRaster img = render(scene);
        img.scene = std::move(scene);
        return img;
    }

    std::string id() const override {
        return "mock-gen:w" + std::to_string(cfg_.world_seed) + ":" +
               std::to_string(cfg_.image_width) + "x" + std::to_string(cfg_.image_height) +
               ":cont" + format_double(cfg_.contamination);
    }

private:
    // Procedural scene: seeded gradient + one shape per concept. Channels stay
    // in [40, 215] so later luma-domain embedding never clips.
    ImageRaster render(const SceneRecord& scene) const {
        ImageRaster img = make_raster(cfg_.image_width, cfg_.image_height);
        Rng rng(hash64({cfg_.world_seed, hash64_str("render"), hash64_str(scene.prompt),
                        scene.seed}));
        const double top[3] = {rng.uniform(40, 215), rng.uniform(40, 215), rng.uniform(40, 215)};
        const double bot[3] = {rng.uniform(40, 215), rng.uniform(40, 215), rng.uniform(40, 215)};
        for (int y = 0; y < img.height; ++y) {
            const double t = img.height > 1 ? double(y) / double(img.height - 1) : 0.0;
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(x, y, c) = std::uint8_t(std::lround(top[c] + t * (bot[c] - top[c])));
        }
        for (const auto& concept_text : scene.concepts) {
            Rng srng(hash64({cfg_.world_seed, hash64_str("shape"),
                             hash64_str(canonical_concept(concept_text)), scene.seed}));
            const int cx = int(srng.uniform_int(0, img.width - 1));
            const int cy = int(srng.uniform_int(0, img.height - 1));
            const int radius = int(srng.uniform_int(img.width / 16, img.width / 5));
            std::uint8_t color[3];
            for (auto& ch : color) ch = std::uint8_t(srng.uniform_int(40, 215));
            const bool circle = (srng.bits() & 1) != 0;
            for (int y = std::max(0, cy - radius); y <= std::min(img.height - 1, cy + radius); ++y)
                for (int x = std::max(0, cx - radius); x <= std::min(img.width - 1, cx + radius);
                     ++x) {
                    const int dx = x - cx, dy = y - cy;
                    if (circle && dx * dx + dy * dy > radius * radius) continue;
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
                }
        }
        return img;
    }

    const MockWorldConfig& cfg_;
};

class MockVlm final : public VlmBackend {
public:
    explicit MockVlm(const MockWorldConfig& cfg) : cfg_(cfg) {}

    VlmReply vlm_yes_no(const ImageRaster& image, const std::string& query,
                        std::uint64_t seed) override {
        if (query.empty()) throw std::invalid_argument("empty VLM query");
        const std::string concept_text = extract_concept(query);
        bool present = false;
        if (image.scene) {
            const std::string canon = canonical_concept(concept_text);
            for (const auto& c : image.scene->concepts)
                if (canonical_concept(c) == canon) {
                    present = true;
                    break;
                }
        }
        if (cfg_.epsilon > 0.0) {
            const std::uint64_t h = hash64({cfg_.world_seed, hash64_str("flip"),
                                            scene_identity(image), hash64_str(query), seed});
            if (hash_unit(h) < cfg_.epsilon) present = !present;
        }
        VlmReply reply;
        reply.raw = present ? "yes" : "no";
        const YesNo parsed = parse_yes_no(reply.raw);
        reply.anomalous = parsed == YesNo::unparseable;
        reply.verdict = parsed == YesNo::yes;
        return reply;
    }

    std::string id() const override {
        return "mock-vlm:w" + std::to_string(cfg_.world_seed) + ":eps" +
               format_double(cfg_.epsilon);
    }

private:
    static std::string extract_concept(const std::string& query) {
        const size_t tick = query.find('`');
        const size_t end = query.rfind("'?");
        if (tick != std::string::npos && end != std::string::npos && end > tick)
            return query.substr(tick + 1, end - tick - 1);
        return query;
    }

    const MockWorldConfig& cfg_;
};

class MockRegen final : public RegenBackend {
public:
    explicit MockRegen(const MockWorldConfig& cfg) : cfg_(cfg) {}

    ImageRaster regenerate(const ImageRaster& image, int steps, std::uint64_t seed) override {
        return regen_proxy_transform(
            image, hash64({cfg_.world_seed, hash64_str("regen"), pixel_hash(image),
                           std::uint64_t(steps), seed}));
    }

    bool proxy() const override { return true; }

    std::string id() const override {
        return "mock-regen:w" + std::to_string(cfg_.world_seed);
    }

private:
    const MockWorldConfig& cfg_;
};

class MockEmbed final : public EmbedBackend {
public:
    explicit MockEmbed(const MockWorldConfig& cfg) : cfg_(cfg) {}

    std::vector<double> embed_text(const std::string& text) override {
        return unit_vector(hash64({cfg_.world_seed, hash64_str("embed-text"),
                                   hash64_str(canonical_concept(text))}));
    }

    std::vector<double> embed_image(const ImageRaster& image) override {
        return unit_vector(hash64({cfg_.world_seed, hash64_str("embed-image"),
                                   scene_identity(image)}));
    }

    std::string id() const override {
        return "mock-embed:w" + std::to_string(cfg_.world_seed);
    }

private:
    static std::vector<double> unit_vector(std::uint64_t seed) {
        Rng rng(seed);
        std::vector<double> v(64);
        double norm = 0.0;
        for (auto& x : v) {
            x = rng.gauss();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        return v;
    }

    const MockWorldConfig& cfg_;
};

}  // namespace

MockWorld::MockWorld(MockWorldConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.epsilon < 0.0 || cfg_.epsilon > 1.0)
        throw std::invalid_argument("epsilon out of [0,1]");
    if (cfg_.contamination < 0.0 || cfg_.contamination > 1.0)
        throw std::invalid_argument("contamination out of [0,1]");
    if (cfg_.image_width < kMinImageDim || cfg_.image_height < kMinImageDim)
        throw std::invalid_argument("mock image dimensions must be >= 16");
    sampler_ = std::make_unique<MockChat>(cfg_);
    generator_ = std::make_unique<MockGen>(cfg_);
    vlm_ = std::make_unique<MockVlm>(cfg_);
    regen_ = std::make_unique<MockRegen>(cfg_);
    embedder_ = std::make_unique<MockEmbed>(cfg_);
}

MockWorld::~MockWorld() = default;

ChatBackend& MockWorld::sampler() { return *sampler_; }
ImageGenBackend& MockWorld::generator() { return *generator_; }
VlmBackend& MockWorld::vlm() { return *vlm_; }
RegenBackend& MockWorld::regen() { return *regen_; }
EmbedBackend& MockWorld::embedder() { return *embedder_; }

const std::vector<std::string>& MockWorld::distractor_vocabulary() { return kDistractors; }

}  // namespace iconmark
