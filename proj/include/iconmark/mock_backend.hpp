#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "iconmark/backends.hpp"

namespace iconmark {

// Deterministic synthetic world: every output is a pure function of
// (inputs, world_seed, epsilon, contamination).
struct MockWorldConfig {
    std::uint64_t world_seed = 1;
    double epsilon = 0.0;        // VLM verdict flip probability
    double contamination = 0.0;  // rate of true database concepts in plain-prompt scenes
    std::vector<std::string> database_concepts;  // contamination pool (usually D)
    int image_width = 96;
    int image_height = 96;
};

class MockWorld {
public:
    explicit MockWorld(MockWorldConfig cfg);
    ~MockWorld();

    const MockWorldConfig& config() const { return cfg_; }

    ChatBackend& sampler();
    ImageGenBackend& generator();
    VlmBackend& vlm();
    RegenBackend& regen();
    EmbedBackend& embedder();

    // Fixed vocabulary for plain-prompt scenes, disjoint from the default
    // concept database (enforced by test).
    static const std::vector<std::string>& distractor_vocabulary();

private:
    MockWorldConfig cfg_;
    std::unique_ptr<ChatBackend> sampler_;
    std::unique_ptr<ImageGenBackend> generator_;
    std::unique_ptr<VlmBackend> vlm_;
    std::unique_ptr<RegenBackend> regen_;
    std::unique_ptr<EmbedBackend> embedder_;
};

}  // namespace iconmark
