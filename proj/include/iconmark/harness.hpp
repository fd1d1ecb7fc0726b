#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iconmark/attacks.hpp"
#include "iconmark/cache.hpp"
#include "iconmark/concept_db.hpp"
#include "iconmark/metrics.hpp"
#include "iconmark/mock_backend.hpp"
#include "iconmark/pipeline.hpp"

namespace iconmark {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct PromptDataset {
    std::string name;
    std::vector<std::string> prompts;  // non-empty, unique
    int images_per_prompt = 10;

    std::string content_hash() const;  // sha256 of newline-joined prompts
};

PromptDataset make_prompt_dataset(std::string name, std::vector<std::string> prompts,
                                  int images_per_prompt = 10);
// .jsonl (one object per line with a "prompt" field) or plain text captions
// (one per line, '#' comments). limit 0 keeps every prompt.
PromptDataset load_prompt_dataset(const std::filesystem::path& path, int images_per_prompt = 10,
                                  size_t limit = 0);

// One OpenAI-compatible endpoint serving all five roles (models may differ).
struct HttpBackendSettings {
    std::string endpoint;
    std::string chat_model;
    std::string gen_model;
    std::string vlm_model;
    std::string regen_model;
    std::string embed_model;
    std::string api_key_env = "ICONMARK_API_KEY";
    double timeout_s = 60.0;
    int max_retries = 2;
};

// Everything one run needs, embedded (prompts and concepts inline) so a mock
// run is reproducible from its manifest alone.
struct RunConfig {
    std::string backend = "mock";  // "mock" | "http"
    MockWorldConfig mock;
    HttpBackendSettings http;

    std::vector<std::string> concepts;
    std::vector<std::string> prompts;
    std::string dataset_name = "inline";
    int images_per_prompt = 10;

    int k = 9;
    std::uint64_t seed = 1;
    unsigned parallelism = 1;
    bool use_cache = true;
    std::vector<std::string> attacks{"affine", "valuemetric", "warp", "regen"};
    std::vector<std::string> detectors{"concept", "bits"};
    std::uint64_t wm_key_seed = 7;
    double wm_step = 36.0;
    int regen_steps = 300;
    std::uint64_t limit = 0;  // truncate dataset; 0 = keep all
    double alpha = 0.05;      // calibration FPR target

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    void validate() const;  // throws std::invalid_argument
};

// Config file loader: accepts inline "concepts"/"prompts" arrays or
// "concepts_file"/"dataset_file" paths (resolved relative to the config file).
RunConfig load_run_config(const std::filesystem::path& path);

struct RunPaths {
    std::filesystem::path root, images, attacked, scores, reports, cache;

    static RunPaths at(const std::filesystem::path& root);
    void create() const;
};

// Owns the configured backend stack; exposes non-owning role pointers with
// caching decorators already applied when enabled.
class BackendSet {
public:
    BackendSet(const RunConfig& cfg, const std::filesystem::path& cache_dir);
    ~BackendSet();
    BackendSet(const BackendSet&) = delete;
    BackendSet& operator=(const BackendSet&) = delete;

    PipelineBackends roles();
    ResponseCache* cache() { return cache_ ? cache_.get() : nullptr; }

private:
    std::unique_ptr<MockWorld> mock_;
    std::vector<std::unique_ptr<ChatBackend>> chat_owned_;
    std::vector<std::unique_ptr<ImageGenBackend>> gen_owned_;
    std::vector<std::unique_ptr<VlmBackend>> vlm_owned_;
    std::vector<std::unique_ptr<RegenBackend>> regen_owned_;
    std::vector<std::unique_ptr<EmbedBackend>> embed_owned_;
    std::unique_ptr<ResponseCache> cache_;
    PipelineBackends roles_{};
};

struct StageAccounting {
    std::uint64_t attempted = 0;
    std::uint64_t succeeded = 0;
    std::uint64_t failed = 0;
};

// Per-arm generation result; persisted as images/<arm>.arm.json so later
// stages recover image ids and ground-truth labels.
struct ArmSummary {
    std::string arm;  // "wm" | "clean"
    int k = 0;
    std::vector<std::string> image_ids;
    StageAccounting counts;
    std::vector<std::string> failures;  // "<image_id>: <reason>"

    std::string to_json() const;
    static ArmSummary from_json(const std::string& text);
};

// Generates images_per_prompt images per prompt with seeds base_seed + index;
// optionally embeds the bit watermark into every generated image. Failures are
// tallied per record and the run continues.
ArmSummary run_generation(const PromptDataset& dataset, int k, const ConceptDatabase& db,
                          const PipelineBackends& backends, std::uint64_t base_seed,
                          const RunPaths& paths, const std::string& arm, unsigned parallelism,
                          const WatermarkKey* embed_key = nullptr,
                          const EmbedParams& wm_params = {});

// Applies one family to every generated image (both arms) with per-image
// seeds hash(run seed, image id, family); writes attacked/<family>/.
StageAccounting run_attack_stage(const RunPaths& paths, AttackFamily family,
                                 std::uint64_t run_seed, RegenBackend* regen, int regen_steps,
                                 unsigned parallelism);

struct ScoreRow {
    std::string image_id;
    bool label = false;  // true = watermarked arm
    std::optional<double> concept_score;
    std::optional<double> bit_score;
    int anomalies = 0;
};

struct ScoreTable {
    std::string condition;  // "none" or an attack family
    std::vector<ScoreRow> rows;  // sorted by image_id
    StageAccounting counts;
    std::vector<std::string> failures;

    std::string to_json() const;
    static ScoreTable from_json(const std::string& text);
    std::string to_csv() const;

    std::vector<ScoredSample> samples(const std::string& detector) const;
};

// Scores images/<id>.png (condition "none") or attacked/<condition>/<id>.png
// for the requested detectors; failed images are excluded with a report line.
ScoreTable run_detection(const RunPaths& paths, const std::string& condition,
                         const std::vector<std::string>& detectors, const ConceptDatabase& db,
                         VlmBackend& vlm, const WatermarkKey& key, const EmbedParams& wm_params,
                         unsigned parallelism);

// Reads every scores/*.scores.json and emits reports/: metrics.csv + .json
// (per detector x condition plus an "average" row per detector), ROC point
// files, per-arm score histograms, and failure accounting.
void run_report(const RunPaths& paths, double alpha);

struct RunManifest {
    std::string run_id;
    std::string toolkit_version = kToolkitVersion;
    std::string created;  // provenance only, excluded from determinism checks
    RunConfig config;
    std::string db_fingerprint;
    std::string dataset_hash;
    std::string wm_key_hex;
    std::optional<double> calibrated_tau_concept;  // from the clean no-attack arm

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

struct RunSummary {
    RunManifest manifest;
    std::map<std::string, StageAccounting> stages;  // "gen:wm", "attack:affine", "detect:none", ...
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
};

// The whole protocol: generate both arms -> attacks -> detection per condition
// -> report -> manifest.
RunSummary run_full(const RunConfig& cfg, const std::filesystem::path& run_dir,
                    const std::string& run_id = "run");

RunSummary replay_manifest(const std::filesystem::path& manifest_path,
                           const std::filesystem::path& new_run_dir);

}  // namespace iconmark
