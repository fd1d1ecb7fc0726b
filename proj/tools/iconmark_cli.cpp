#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iconmark/harness.hpp"
#include "iconmark/strutil.hpp"

namespace fs = std::filesystem;
using namespace iconmark;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string backend;
    unsigned parallelism = 0;  // 0 = keep config value
    std::string cache_dir;
    std::optional<std::uint64_t> seed;
    std::uint64_t limit = 0;
};

RunConfig effective_config(const GlobalOpts& g, bool required) {
    RunConfig cfg;
    if (!g.config_path.empty()) {
        cfg = load_run_config(g.config_path);
    } else if (required) {
        throw CLI::ValidationError("--config", "this subcommand requires --config <file>");
    }
    if (!g.backend.empty()) cfg.backend = g.backend;
    if (g.parallelism > 0) cfg.parallelism = g.parallelism;
    if (g.seed) cfg.seed = *g.seed;
    if (g.limit > 0) cfg.limit = g.limit;
    return cfg;
}

fs::path cache_dir_for(const GlobalOpts& g, const RunPaths& paths) {
    return g.cache_dir.empty() ? paths.cache : fs::path(g.cache_dir);
}

void print_accounting(const std::string& stage, const StageAccounting& c) {
    std::cout << stage << ": attempted=" << c.attempted << " succeeded=" << c.succeeded
              << " failed=" << c.failed << "\n";
}

WatermarkKey key_from_options(const std::string& hex, std::uint64_t key_seed) {
    return hex.empty() ? WatermarkKey::from_seed(key_seed) : WatermarkKey::from_hex(hex);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IConMark concept-watermarking toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON run configuration file");
    app.add_option("--backend", g.backend, "override backend: mock | http");
    app.add_option("--parallelism", g.parallelism, "worker threads per stage");
    app.add_option("--cache-dir", g.cache_dir, "response cache directory");
    app.add_option("--seed", g.seed, "override run seed");
    app.add_option("--limit", g.limit, "truncate the prompt dataset to this many prompts");

    // concepts validate | fingerprint
    auto* concepts_cmd = app.add_subcommand("concepts", "concept database utilities");
    concepts_cmd->require_subcommand(1);
    std::string concepts_path;
    auto* validate_cmd = concepts_cmd->add_subcommand("validate", "check database invariants");
    validate_cmd->add_option("file", concepts_path, "concept list, one per line")->required();
    auto* fingerprint_cmd =
        concepts_cmd->add_subcommand("fingerprint", "print the database fingerprint");
    fingerprint_cmd->add_option("file", concepts_path, "concept list, one per line")->required();

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "generate watermarked and clean arms");
    std::string run_dir;
    std::string gen_arm = "both";
    gen_cmd->add_option("--run-dir", run_dir, "run directory")->required();
    gen_cmd->add_option("--arm", gen_arm, "wm | clean | both")
        ->check(CLI::IsMember({"wm", "clean", "both"}));

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "apply a robustness attack");
    std::string attack_family_opt;
    std::uint64_t attack_seed = 0;
    std::vector<std::string> attack_files;
    attack_cmd->add_option("--run-dir", run_dir, "run directory (stage mode)");
    attack_cmd->add_option("--family", attack_family_opt, "affine | valuemetric | warp | regen")
        ->required();
    attack_cmd->add_option("--attack-seed", attack_seed, "seed for single-file mode");
    attack_cmd->add_option("files", attack_files, "input.png output.png (single-file mode)");

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "score images with the detectors");
    std::string detect_set = "none";
    std::string detect_image;
    detect_cmd->add_option("--run-dir", run_dir, "run directory (stage mode)");
    detect_cmd->add_option("--set", detect_set, "none or an attack family");
    detect_cmd->add_option("--image", detect_image, "score a single image instead");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "full protocol: gen, attacks, detect, report");
    std::string replay_path;
    std::string run_id = "run";
    eval_cmd->add_option("--run-dir", run_dir, "run directory")->required();
    eval_cmd->add_option("--from-manifest", replay_path, "replay an existing manifest");
    eval_cmd->add_option("--run-id", run_id, "identifier recorded in the manifest");

    // report
    auto* report_cmd = app.add_subcommand("report", "rebuild reports from score tables");
    double report_alpha = 0.05;
    report_cmd->add_option("--run-dir", run_dir, "run directory")->required();
    report_cmd->add_option("--alpha", report_alpha, "calibration FPR target");

    // wm embed | extract
    auto* wm_cmd = app.add_subcommand("wm", "frequency-domain bit watermark");
    wm_cmd->require_subcommand(1);
    std::string wm_key_hex;
    std::uint64_t wm_key_seed = 7;
    double wm_step = 36.0;
    std::string wm_in, wm_out;
    auto* embed_cmd = wm_cmd->add_subcommand("embed", "embed the 100-bit key");
    embed_cmd->add_option("--key", wm_key_hex, "25-hex-char key (default: derived from seed)");
    embed_cmd->add_option("--key-seed", wm_key_seed, "key derivation seed");
    embed_cmd->add_option("--step", wm_step, "QIM quantization step");
    embed_cmd->add_option("input", wm_in, "input PNG")->required();
    embed_cmd->add_option("output", wm_out, "output PNG")->required();
    auto* extract_cmd = wm_cmd->add_subcommand("extract", "extract bits and score them");
    extract_cmd->add_option("--key", wm_key_hex, "25-hex-char key to score against");
    extract_cmd->add_option("--key-seed", wm_key_seed, "key derivation seed");
    extract_cmd->add_option("--step", wm_step, "QIM quantization step");
    extract_cmd->add_option("input", wm_in, "input PNG")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) {
            const ConceptDatabase db = load_concept_db(concepts_path);
            std::cout << "valid: " << db.size() << " concepts, fingerprint " << db.fingerprint()
                      << "\n";
            return 0;
        }
        if (fingerprint_cmd->parsed()) {
            std::cout << load_concept_db(concepts_path).fingerprint() << "\n";
            return 0;
        }

        if (gen_cmd->parsed()) {
            RunConfig cfg = effective_config(g, true);
            cfg.validate();
            const RunPaths paths = RunPaths::at(run_dir);
            paths.create();
            const ConceptDatabase db(cfg.concepts);
            std::vector<std::string> prompts = cfg.prompts;
            if (cfg.limit > 0 && prompts.size() > cfg.limit) prompts.resize(cfg.limit);
            const PromptDataset dataset =
                make_prompt_dataset(cfg.dataset_name, prompts, cfg.images_per_prompt);
            BackendSet backends(cfg, cache_dir_for(g, paths));
            const WatermarkKey key = WatermarkKey::from_seed(cfg.wm_key_seed);
            EmbedParams params;
            params.step = cfg.wm_step;
            const bool want_bits = std::find(cfg.detectors.begin(), cfg.detectors.end(),
                                             "bits") != cfg.detectors.end();
            if (gen_arm == "wm" || gen_arm == "both") {
                const ArmSummary s =
                    run_generation(dataset, cfg.k, db, backends.roles(), cfg.seed, paths, "wm",
                                   cfg.parallelism, want_bits ? &key : nullptr, params);
                print_accounting("gen:wm", s.counts);
            }
            if (gen_arm == "clean" || gen_arm == "both") {
                const ArmSummary s = run_generation(dataset, 0, db, backends.roles(), cfg.seed,
                                                    paths, "clean", cfg.parallelism);
                print_accounting("gen:clean", s.counts);
            }
            return 0;
        }

        if (attack_cmd->parsed()) {
            const AttackFamily family = parse_attack_family(attack_family_opt);
            if (!attack_files.empty()) {
                if (attack_files.size() != 2)
                    throw std::invalid_argument("single-file mode needs input.png output.png");
                RegenBackend* regen = nullptr;
                std::optional<BackendSet> backends;
                std::unique_ptr<MockWorld> fallback;
                if (family == AttackFamily::regen) {
                    if (!g.config_path.empty()) {
                        backends.emplace(effective_config(g, true),
                                         g.cache_dir.empty() ? fs::path(".iconmark-cache")
                                                             : fs::path(g.cache_dir));
                        regen = backends->roles().regen;
                    } else {
                        fallback = std::make_unique<MockWorld>(MockWorldConfig{});
                        regen = &fallback->regen();
                    }
                }
                AttackSpec spec;
                spec.family = family;
                spec.seed = attack_seed;
                AttackMetadata meta;
                const ImageRaster out =
                    apply_attack(load_image(attack_files[0]), spec, regen, &meta);
                save_image(out, attack_files[1]);
                std::ofstream(fs::path(attack_files[1]).replace_extension(".attack.json"))
                    << meta.to_json();
                std::cout << meta.to_json();
                return 0;
            }
            if (run_dir.empty())
                throw std::invalid_argument("attack needs --run-dir or input/output files");
            RunConfig cfg = effective_config(g, false);
            const RunPaths paths = RunPaths::at(run_dir);
            RegenBackend* regen = nullptr;
            std::optional<BackendSet> backends;
            std::unique_ptr<MockWorld> fallback;
            if (family == AttackFamily::regen) {
                if (!g.config_path.empty()) {
                    backends.emplace(cfg, cache_dir_for(g, paths));
                    regen = backends->roles().regen;
                } else {
                    fallback = std::make_unique<MockWorld>(MockWorldConfig{});
                    regen = &fallback->regen();
                }
            }
            const StageAccounting counts = run_attack_stage(
                paths, family, g.seed.value_or(cfg.seed), regen, cfg.regen_steps,
                cfg.parallelism);
            print_accounting("attack:" + attack_family_opt, counts);
            return 0;
        }

        if (detect_cmd->parsed()) {
            RunConfig cfg = effective_config(g, true);
            cfg.validate();
            const ConceptDatabase db(cfg.concepts);
            const WatermarkKey key = WatermarkKey::from_seed(cfg.wm_key_seed);
            EmbedParams params;
            params.step = cfg.wm_step;
            if (!detect_image.empty()) {
                // Single image: build backends with a local cache dir.
                BackendSet backends(cfg, g.cache_dir.empty() ? fs::path(".iconmark-cache")
                                                             : fs::path(g.cache_dir));
                const ImageRaster image = load_image(detect_image);
                const DetectionResult det =
                    detect_score(image, db, *backends.roles().vlm, cfg.parallelism);
                std::cout << "concept_score: " << det.score << "\n";
                std::cout << "anomalies: " << det.anomalies << "\n";
                for (size_t i = 0; i < db.size(); ++i)
                    if (det.verdicts[i]) std::cout << "detected: " << db.at(i) << "\n";
                const double bits = bit_score(extract_bits(image, params), key);
                std::cout << "bit_score: " << format_double(bits) << "\n";
                return 0;
            }
            if (run_dir.empty())
                throw std::invalid_argument("detect needs --run-dir or --image");
            const RunPaths paths = RunPaths::at(run_dir);
            BackendSet backends(cfg, cache_dir_for(g, paths));
            const ScoreTable table = run_detection(paths, detect_set, cfg.detectors, db,
                                                   *backends.roles().vlm, key, params,
                                                   cfg.parallelism);
            print_accounting("detect:" + detect_set, table.counts);
            if (backends.cache())
                std::cout << "cache: hits=" << backends.cache()->hits()
                          << " misses=" << backends.cache()->misses() << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            RunSummary summary;
            if (!replay_path.empty()) {
                summary = replay_manifest(replay_path, run_dir);
            } else {
                summary = run_full(effective_config(g, true), run_dir, run_id);
            }
            for (const auto& [stage, counts] : summary.stages) print_accounting(stage, counts);
            std::cout << "run: " << summary.manifest.run_id << "\n";
            std::cout << "cache: hits=" << summary.cache_hits
                      << " misses=" << summary.cache_misses << "\n";
            std::cout << "reports: " << (fs::path(run_dir) / "reports").string() << "\n";
            return 0;
        }

        if (report_cmd->parsed()) {
            run_report(RunPaths::at(run_dir), report_alpha);
            std::cout << "reports: " << (fs::path(run_dir) / "reports").string() << "\n";
            return 0;
        }

        if (embed_cmd->parsed()) {
            const WatermarkKey key = key_from_options(wm_key_hex, wm_key_seed);
            EmbedParams params;
            params.step = wm_step;
            save_image(embed_bits(load_image(wm_in), key, params), wm_out);
            std::cout << "key: " << key.to_hex() << "\n";
            return 0;
        }
        if (extract_cmd->parsed()) {
            EmbedParams params;
            params.step = wm_step;
            const std::vector<std::uint8_t> bits = extract_bits(load_image(wm_in), params);
            WatermarkKey extracted;
            extracted.bits = bits;
            std::cout << "bits: " << extracted.to_hex() << "\n";
            if (!wm_key_hex.empty() || extract_cmd->count("--key-seed") > 0) {
                const WatermarkKey key = key_from_options(wm_key_hex, wm_key_seed);
                std::cout << "bit_score: " << format_double(bit_score(bits, key)) << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand handled\n";
    return 1;
}
