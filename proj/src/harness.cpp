#include "iconmark/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "iconmark/http_backend.hpp"
#include "iconmark/parallel.hpp"
#include "iconmark/rng.hpp"
#include "iconmark/sha256.hpp"
#include "iconmark/strutil.hpp"

namespace iconmark {

using nlohmann::json;

namespace {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("short write " + path.string());
}

json accounting_to_json(const StageAccounting& c) {
    return json{{"attempted", c.attempted}, {"succeeded", c.succeeded}, {"failed", c.failed}};
}

StageAccounting accounting_from_json(const json& doc) {
    StageAccounting c;
    c.attempted = doc.at("attempted").get<std::uint64_t>();
    c.succeeded = doc.at("succeeded").get<std::uint64_t>();
    c.failed = doc.at("failed").get<std::uint64_t>();
    return c;
}

}  // namespace

// ---------------------------------------------------------------- datasets

std::string PromptDataset::content_hash() const {
    return sha256_hex(join(prompts, "\n"));
}

PromptDataset make_prompt_dataset(std::string name, std::vector<std::string> prompts,
                                  int images_per_prompt) {
    if (name.empty()) throw std::invalid_argument("dataset name must be non-empty");
    if (prompts.empty()) throw std::invalid_argument("dataset has no prompts");
    if (images_per_prompt < 1) throw std::invalid_argument("images_per_prompt must be >= 1");
    std::set<std::string> seen;
    for (auto& p : prompts) {
        p = trim(p);
        if (p.empty()) throw std::invalid_argument("dataset contains an empty prompt");
        if (!seen.insert(p).second)
            throw std::invalid_argument("dataset contains duplicate prompt: " + p);
    }
    PromptDataset ds;
    ds.name = std::move(name);
    ds.prompts = std::move(prompts);
    ds.images_per_prompt = images_per_prompt;
    return ds;
}

PromptDataset load_prompt_dataset(const std::filesystem::path& path, int images_per_prompt,
                                  size_t limit) {
    const std::string text = read_text_file(path);
    std::vector<std::string> prompts;
    const bool is_jsonl = path.extension() == ".jsonl";
    size_t lineno = 0;
    for (const auto& line : split_lines(text)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (is_jsonl) {
            json doc;
            try {
                doc = json::parse(stripped);
            } catch (const json::parse_error& e) {
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " +
                                         e.what());
            }
            prompts.push_back(doc.at("prompt").get<std::string>());
        } else {
            if (stripped[0] == '#') continue;
            prompts.push_back(stripped);
        }
    }
    if (limit > 0 && prompts.size() > limit) prompts.resize(limit);
    return make_prompt_dataset(path.stem().string(), std::move(prompts), images_per_prompt);
}

// ------------------------------------------------------------------ config

std::string RunConfig::to_json() const {
    json doc;
    doc["backend"] = backend;
    doc["mock"] = {{"world_seed", mock.world_seed},
                   {"epsilon", mock.epsilon},
                   {"contamination", mock.contamination},
                   {"image_width", mock.image_width},
                   {"image_height", mock.image_height}};
    doc["http"] = {{"endpoint", http.endpoint},
                   {"chat_model", http.chat_model},
                   {"gen_model", http.gen_model},
                   {"vlm_model", http.vlm_model},
                   {"regen_model", http.regen_model},
                   {"embed_model", http.embed_model},
                   {"api_key_env", http.api_key_env},
                   {"timeout_s", http.timeout_s},
                   {"max_retries", http.max_retries}};
    doc["concepts"] = concepts;
    doc["prompts"] = prompts;
    doc["dataset_name"] = dataset_name;
    doc["images_per_prompt"] = images_per_prompt;
    doc["k"] = k;
    doc["seed"] = seed;
    doc["parallelism"] = parallelism;
    doc["use_cache"] = use_cache;
    doc["attacks"] = attacks;
    doc["detectors"] = detectors;
    doc["wm_key_seed"] = wm_key_seed;
    doc["wm_step"] = wm_step;
    doc["regen_steps"] = regen_steps;
    doc["limit"] = limit;
    doc["alpha"] = alpha;
    return doc.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    const json doc = json::parse(text);
    RunConfig cfg;
    cfg.backend = doc.value("backend", cfg.backend);
    if (doc.contains("mock")) {
        const json& m = doc.at("mock");
        cfg.mock.world_seed = m.value("world_seed", cfg.mock.world_seed);
        cfg.mock.epsilon = m.value("epsilon", cfg.mock.epsilon);
        cfg.mock.contamination = m.value("contamination", cfg.mock.contamination);
        cfg.mock.image_width = m.value("image_width", cfg.mock.image_width);
        cfg.mock.image_height = m.value("image_height", cfg.mock.image_height);
    }
    if (doc.contains("http")) {
        const json& h = doc.at("http");
        cfg.http.endpoint = h.value("endpoint", cfg.http.endpoint);
        cfg.http.chat_model = h.value("chat_model", cfg.http.chat_model);
        cfg.http.gen_model = h.value("gen_model", cfg.http.gen_model);
        cfg.http.vlm_model = h.value("vlm_model", cfg.http.vlm_model);
        cfg.http.regen_model = h.value("regen_model", cfg.http.regen_model);
        cfg.http.embed_model = h.value("embed_model", cfg.http.embed_model);
        cfg.http.api_key_env = h.value("api_key_env", cfg.http.api_key_env);
        cfg.http.timeout_s = h.value("timeout_s", cfg.http.timeout_s);
        cfg.http.max_retries = h.value("max_retries", cfg.http.max_retries);
    }
    cfg.concepts = doc.value("concepts", cfg.concepts);
    cfg.prompts = doc.value("prompts", cfg.prompts);
    cfg.dataset_name = doc.value("dataset_name", cfg.dataset_name);
    cfg.images_per_prompt = doc.value("images_per_prompt", cfg.images_per_prompt);
    cfg.k = doc.value("k", cfg.k);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.parallelism = doc.value("parallelism", cfg.parallelism);
    cfg.use_cache = doc.value("use_cache", cfg.use_cache);
    cfg.attacks = doc.value("attacks", cfg.attacks);
    cfg.detectors = doc.value("detectors", cfg.detectors);
    cfg.wm_key_seed = doc.value("wm_key_seed", cfg.wm_key_seed);
    cfg.wm_step = doc.value("wm_step", cfg.wm_step);
    cfg.regen_steps = doc.value("regen_steps", cfg.regen_steps);
    cfg.limit = doc.value("limit", cfg.limit);
    cfg.alpha = doc.value("alpha", cfg.alpha);
    return cfg;
}

void RunConfig::validate() const {
    if (backend != "mock" && backend != "http")
        throw std::invalid_argument("backend must be \"mock\" or \"http\"");
    if (backend == "http" && http.endpoint.empty())
        throw std::invalid_argument("http backend requires an endpoint");
    if (concepts.empty()) throw std::invalid_argument("config has no concepts");
    if (prompts.empty()) throw std::invalid_argument("config has no prompts");
    if (k < 0 || static_cast<size_t>(k) > concepts.size())
        throw std::invalid_argument("k must be in [0, N]");
    if (images_per_prompt < 1) throw std::invalid_argument("images_per_prompt must be >= 1");
    if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(wm_step > 0.0)) throw std::invalid_argument("wm_step must be positive");
    if (regen_steps < 1) throw std::invalid_argument("regen_steps must be >= 1");
    for (const auto& a : attacks) parse_attack_family(a);  // throws on unknown
    for (const auto& d : detectors)
        if (d != "concept" && d != "bits")
            throw std::invalid_argument("unknown detector: " + d);
    if (detectors.empty()) throw std::invalid_argument("config has no detectors");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const json doc = json::parse(read_text_file(path));
    RunConfig cfg = RunConfig::from_json(doc.dump());
    const auto base = path.parent_path();
    if (doc.contains("concepts_file")) {
        if (!cfg.concepts.empty())
            throw std::invalid_argument("config sets both concepts and concepts_file");
        const std::filesystem::path ref = doc.at("concepts_file").get<std::string>();
        cfg.concepts = load_concept_db(ref.is_absolute() ? ref : base / ref).concepts();
    }
    if (doc.contains("dataset_file")) {
        if (!cfg.prompts.empty())
            throw std::invalid_argument("config sets both prompts and dataset_file");
        const std::filesystem::path ref = doc.at("dataset_file").get<std::string>();
        PromptDataset ds = load_prompt_dataset(ref.is_absolute() ? ref : base / ref,
                                               cfg.images_per_prompt);
        cfg.prompts = std::move(ds.prompts);
        cfg.dataset_name = ds.name;
    }
    return cfg;
}

// ------------------------------------------------------------------- paths

RunPaths RunPaths::at(const std::filesystem::path& root) {
    RunPaths p;
    p.root = root;
    p.images = root / "images";
    p.attacked = root / "attacked";
    p.scores = root / "scores";
    p.reports = root / "reports";
    p.cache = root / "cache";
    return p;
}

void RunPaths::create() const {
    for (const auto& d : {root, images, attacked, scores, reports})
        std::filesystem::create_directories(d);
}

// ---------------------------------------------------------------- backends

BackendSet::BackendSet(const RunConfig& cfg, const std::filesystem::path& cache_dir) {
    if (cfg.backend == "mock") {
        MockWorldConfig mc = cfg.mock;
        mc.database_concepts = cfg.concepts;
        mock_ = std::make_unique<MockWorld>(std::move(mc));
        roles_.sampler = &mock_->sampler();
        roles_.generator = &mock_->generator();
        roles_.vlm = &mock_->vlm();
        roles_.regen = &mock_->regen();
        roles_.embedder = &mock_->embedder();
    } else if (cfg.backend == "http") {
        auto role_cfg = [&](const std::string& model) {
            BackendConfig bc;
            bc.endpoint = cfg.http.endpoint;
            bc.model = model;
            bc.api_key_env = cfg.http.api_key_env;
            bc.timeout_s = cfg.http.timeout_s;
            bc.max_retries = cfg.http.max_retries;
            return bc;
        };
        if (!cfg.http.chat_model.empty()) {
            chat_owned_.push_back(std::make_unique<HttpChatBackend>(role_cfg(cfg.http.chat_model)));
            roles_.sampler = chat_owned_.back().get();
        }
        if (!cfg.http.gen_model.empty()) {
            gen_owned_.push_back(
                std::make_unique<HttpImageGenBackend>(role_cfg(cfg.http.gen_model)));
            roles_.generator = gen_owned_.back().get();
        }
        if (!cfg.http.vlm_model.empty()) {
            vlm_owned_.push_back(std::make_unique<HttpVlmBackend>(role_cfg(cfg.http.vlm_model)));
            roles_.vlm = vlm_owned_.back().get();
        }
        if (!cfg.http.regen_model.empty()) {
            regen_owned_.push_back(
                std::make_unique<HttpRegenBackend>(role_cfg(cfg.http.regen_model)));
            roles_.regen = regen_owned_.back().get();
        }
        if (!cfg.http.embed_model.empty()) {
            embed_owned_.push_back(
                std::make_unique<HttpEmbedBackend>(role_cfg(cfg.http.embed_model)));
            roles_.embedder = embed_owned_.back().get();
        }
    } else {
        throw std::invalid_argument("unknown backend: " + cfg.backend);
    }

    if (cfg.use_cache) {
        cache_ = std::make_unique<ResponseCache>(cache_dir);
        if (roles_.sampler) {
            chat_owned_.push_back(std::make_unique<CachedChatBackend>(*roles_.sampler, *cache_));
            roles_.sampler = chat_owned_.back().get();
        }
        if (roles_.generator) {
            gen_owned_.push_back(
                std::make_unique<CachedImageGenBackend>(*roles_.generator, *cache_));
            roles_.generator = gen_owned_.back().get();
        }
        if (roles_.vlm) {
            vlm_owned_.push_back(std::make_unique<CachedVlmBackend>(*roles_.vlm, *cache_));
            roles_.vlm = vlm_owned_.back().get();
        }
        if (roles_.regen) {
            regen_owned_.push_back(std::make_unique<CachedRegenBackend>(*roles_.regen, *cache_));
            roles_.regen = regen_owned_.back().get();
        }
        if (roles_.embedder) {
            embed_owned_.push_back(std::make_unique<CachedEmbedBackend>(*roles_.embedder, *cache_));
            roles_.embedder = embed_owned_.back().get();
        }
    }
}

BackendSet::~BackendSet() = default;

PipelineBackends BackendSet::roles() { return roles_; }

// -------------------------------------------------------------- generation

std::string ArmSummary::to_json() const {
    json doc;
    doc["arm"] = arm;
    doc["k"] = k;
    doc["image_ids"] = image_ids;
    doc["counts"] = accounting_to_json(counts);
    doc["failures"] = failures;
    return doc.dump(2) + "\n";
}

ArmSummary ArmSummary::from_json(const std::string& text) {
    const json doc = json::parse(text);
    ArmSummary s;
    s.arm = doc.at("arm").get<std::string>();
    s.k = doc.at("k").get<int>();
    s.image_ids = doc.at("image_ids").get<std::vector<std::string>>();
    s.counts = accounting_from_json(doc.at("counts"));
    s.failures = doc.at("failures").get<std::vector<std::string>>();
    return s;
}

namespace {

std::string image_id_for(const std::string& arm, size_t prompt_idx, int image_idx) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04zu_%02d", arm.c_str(), prompt_idx, image_idx);
    return buf;
}

}  // namespace

ArmSummary run_generation(const PromptDataset& dataset, int k, const ConceptDatabase& db,
                          const PipelineBackends& backends, std::uint64_t base_seed,
                          const RunPaths& paths, const std::string& arm, unsigned parallelism,
                          const WatermarkKey* embed_key, const EmbedParams& wm_params) {
    if (arm.empty() || arm.find('_') != std::string::npos)
        throw std::invalid_argument("arm must be a non-empty name without underscores");
    const size_t per = static_cast<size_t>(dataset.images_per_prompt);
    const size_t total = dataset.prompts.size() * per;
    std::vector<std::string> ids(total);
    std::vector<std::uint8_t> ok(total, 0);
    std::vector<std::string> errors(total);

    parallel_for(total, parallelism, [&](size_t idx) {
        const size_t prompt_idx = idx / per;
        const int image_idx = static_cast<int>(idx % per);
        const std::string id = image_id_for(arm, prompt_idx, image_idx);
        ids[idx] = id;
        try {
            WatermarkedImageRecord rec = generate_watermarked(
                dataset.prompts[prompt_idx], k, db, backends, base_seed + idx);
            rec.image_id = id;
            if (embed_key) rec.image = embed_bits(rec.image, *embed_key, wm_params);
            save_image(rec.image, paths.images / (id + ".png"));
            write_text_file(paths.images / (id + ".record.json"), rec.to_json());
            ok[idx] = 1;
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
    });

    ArmSummary summary;
    summary.arm = arm;
    summary.k = k;
    summary.counts.attempted = total;
    for (size_t i = 0; i < total; ++i) {
        if (ok[i]) {
            summary.image_ids.push_back(ids[i]);
            ++summary.counts.succeeded;
        } else {
            summary.failures.push_back(ids[i] + ": " + errors[i]);
            ++summary.counts.failed;
        }
    }
    write_text_file(paths.images / (arm + ".arm.json"), summary.to_json());
    return summary;
}

// ----------------------------------------------------------------- attacks

namespace {

std::vector<ArmSummary> load_arm_summaries(const RunPaths& paths) {
    std::vector<ArmSummary> arms;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::exists(paths.images))
        for (const auto& entry : std::filesystem::directory_iterator(paths.images)) {
            const auto name = entry.path().filename().string();
            if (name.size() > 9 && name.substr(name.size() - 9) == ".arm.json")
                files.push_back(entry.path());
        }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) arms.push_back(ArmSummary::from_json(read_text_file(f)));
    if (arms.empty()) throw std::runtime_error("no generated arms under " + paths.images.string());
    return arms;
}

}  // namespace

StageAccounting run_attack_stage(const RunPaths& paths, AttackFamily family,
                                 std::uint64_t run_seed, RegenBackend* regen, int regen_steps,
                                 unsigned parallelism) {
    const std::string fam = attack_family_name(family);
    std::vector<std::string> ids;
    for (const auto& arm : load_arm_summaries(paths))
        ids.insert(ids.end(), arm.image_ids.begin(), arm.image_ids.end());
    std::sort(ids.begin(), ids.end());

    const auto out_dir = paths.attacked / fam;
    std::filesystem::create_directories(out_dir);

    std::vector<std::uint8_t> ok(ids.size(), 0);
    std::vector<std::string> errors(ids.size());
    parallel_for(ids.size(), parallelism, [&](size_t i) {
        const std::string& id = ids[i];
        try {
            const ImageRaster input = load_image(paths.images / (id + ".png"));
            AttackSpec spec;
            spec.family = family;
            spec.seed = hash64({run_seed, hash64_str(id), hash64_str(fam)});
            if (family == AttackFamily::regen)
                spec.overrides["steps"] = static_cast<double>(regen_steps);
            AttackMetadata meta;
            const ImageRaster attacked = apply_attack(input, spec, regen, &meta);
            save_image(attacked, out_dir / (id + ".png"));
            write_text_file(out_dir / (id + ".attack.json"), meta.to_json());
            ok[i] = 1;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    StageAccounting counts;
    counts.attempted = ids.size();
    std::vector<std::string> failures;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ok[i]) {
            ++counts.succeeded;
        } else {
            ++counts.failed;
            failures.push_back(ids[i] + ": " + errors[i]);
        }
    }
    json doc;
    doc["family"] = fam;
    doc["counts"] = accounting_to_json(counts);
    doc["failures"] = failures;
    write_text_file(paths.attacked / (fam + ".stage.json"), doc.dump(2) + "\n");
    return counts;
}

// --------------------------------------------------------------- detection

std::string ScoreTable::to_json() const {
    json doc;
    doc["condition"] = condition;
    json rows_json = json::array();
    for (const auto& r : rows) {
        json row;
        row["image_id"] = r.image_id;
        row["label"] = r.label;
        row["concept_score"] = r.concept_score ? json(*r.concept_score) : json(nullptr);
        row["bit_score"] = r.bit_score ? json(*r.bit_score) : json(nullptr);
        row["anomalies"] = r.anomalies;
        rows_json.push_back(std::move(row));
    }
    doc["rows"] = std::move(rows_json);
    doc["counts"] = accounting_to_json(counts);
    doc["failures"] = failures;
    return doc.dump(2) + "\n";
}

ScoreTable ScoreTable::from_json(const std::string& text) {
    const json doc = json::parse(text);
    ScoreTable t;
    t.condition = doc.at("condition").get<std::string>();
    for (const auto& row : doc.at("rows")) {
        ScoreRow r;
        r.image_id = row.at("image_id").get<std::string>();
        r.label = row.at("label").get<bool>();
        if (!row.at("concept_score").is_null())
            r.concept_score = row.at("concept_score").get<double>();
        if (!row.at("bit_score").is_null()) r.bit_score = row.at("bit_score").get<double>();
        r.anomalies = row.at("anomalies").get<int>();
        t.rows.push_back(std::move(r));
    }
    t.counts = accounting_from_json(doc.at("counts"));
    t.failures = doc.at("failures").get<std::vector<std::string>>();
    return t;
}

std::string ScoreTable::to_csv() const {
    std::string out = "image_id,label,concept_score,bit_score,anomalies\n";
    for (const auto& r : rows) {
        out += r.image_id;
        out += r.label ? ",1," : ",0,";
        if (r.concept_score) out += format_double(*r.concept_score);
        out += ',';
        if (r.bit_score) out += format_double(*r.bit_score);
        out += ',';
        out += std::to_string(r.anomalies);
        out += '\n';
    }
    return out;
}

std::vector<ScoredSample> ScoreTable::samples(const std::string& detector) const {
    std::vector<ScoredSample> out;
    for (const auto& r : rows) {
        const auto& v = detector == "concept" ? r.concept_score : r.bit_score;
        if (v) out.push_back({*v, r.label});
    }
    return out;
}

ScoreTable run_detection(const RunPaths& paths, const std::string& condition,
                         const std::vector<std::string>& detectors, const ConceptDatabase& db,
                         VlmBackend& vlm, const WatermarkKey& key, const EmbedParams& wm_params,
                         unsigned parallelism) {
    const bool want_concept =
        std::find(detectors.begin(), detectors.end(), "concept") != detectors.end();
    const bool want_bits = std::find(detectors.begin(), detectors.end(), "bits") != detectors.end();
    if (!want_concept && !want_bits) throw std::invalid_argument("no detectors requested");

    const auto dir = condition == "none" ? paths.images : paths.attacked / condition;
    if (!std::filesystem::exists(dir))
        throw std::runtime_error("image set not found: " + dir.string());

    struct Item {
        std::string id;
        bool label;
    };
    std::vector<Item> items;
    for (const auto& arm : load_arm_summaries(paths)) {
        const bool label = arm.k > 0;
        for (const auto& id : arm.image_ids) items.push_back({id, label});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.id < b.id; });

    std::vector<ScoreRow> rows(items.size());
    std::vector<std::uint8_t> ok(items.size(), 0);
    std::vector<std::string> errors(items.size());
    // Parallelism is spent across images; per-image concept queries stay
    // serial so total in-flight requests remain bounded by P.
    parallel_for(items.size(), parallelism, [&](size_t i) {
        try {
            const ImageRaster image = load_image(dir / (items[i].id + ".png"));
            ScoreRow row;
            row.image_id = items[i].id;
            row.label = items[i].label;
            if (want_concept) {
                const DetectionResult det = detect_score(image, db, vlm, 1);
                row.concept_score = static_cast<double>(det.score);
                row.anomalies = det.anomalies;
            }
            if (want_bits) row.bit_score = bit_score(extract_bits(image, wm_params), key);
            rows[i] = std::move(row);
            ok[i] = 1;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    ScoreTable table;
    table.condition = condition;
    table.counts.attempted = items.size();
    for (size_t i = 0; i < items.size(); ++i) {
        if (ok[i]) {
            table.rows.push_back(std::move(rows[i]));
            ++table.counts.succeeded;
        } else {
            table.failures.push_back(items[i].id + ": " + errors[i]);
            ++table.counts.failed;
        }
    }
    write_text_file(paths.scores / (condition + ".scores.json"), table.to_json());
    write_text_file(paths.scores / (condition + ".scores.csv"), table.to_csv());
    return table;
}

// ----------------------------------------------------------------- reports

namespace {

std::string percent2(double v01) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v01 * 100.0);
    return buf;
}

// Histogram CSV over the distinct scores present: score,watermarked,clean.
std::string histogram_csv(const std::vector<ScoredSample>& samples) {
    std::map<double, std::pair<std::uint64_t, std::uint64_t>> bins;
    for (const auto& s : samples) {
        auto& bin = bins[s.score];
        if (s.label)
            ++bin.first;
        else
            ++bin.second;
    }
    std::string out = "score,watermarked,clean\n";
    for (const auto& [score, counts] : bins) {
        out += format_double(score);
        out += ',';
        out += std::to_string(counts.first);
        out += ',';
        out += std::to_string(counts.second);
        out += '\n';
    }
    return out;
}

struct FusedInput {
    std::vector<double> a, b;
    std::vector<bool> labels;
    size_t n_pos = 0, n_neg = 0;
};

// Rows carrying both raw scores; fusion needs aligned pairs.
std::optional<FusedInput> fused_input(const ScoreTable& table) {
    FusedInput in;
    for (const auto& r : table.rows) {
        if (!r.concept_score || !r.bit_score) continue;
        in.a.push_back(*r.concept_score);
        in.b.push_back(*r.bit_score);
        in.labels.push_back(r.label);
        ++(r.label ? in.n_pos : in.n_neg);
    }
    if (in.a.empty() || in.n_pos == 0 || in.n_neg == 0) return std::nullopt;
    return in;
}

}  // namespace

void run_report(const RunPaths& paths, double alpha) {
    std::vector<std::filesystem::path> score_files;
    if (std::filesystem::exists(paths.scores))
        for (const auto& entry : std::filesystem::directory_iterator(paths.scores)) {
            const auto name = entry.path().filename().string();
            if (name.size() > 12 && name.substr(name.size() - 12) == ".scores.json")
                score_files.push_back(entry.path());
        }
    std::sort(score_files.begin(), score_files.end());
    if (score_files.empty()) throw std::runtime_error("no score tables under " +
                                                      paths.scores.string());

    std::vector<ScoreTable> tables;
    for (const auto& f : score_files) tables.push_back(ScoreTable::from_json(read_text_file(f)));

    // detector -> condition -> metrics; insertion into std::map keeps output order stable.
    std::map<std::string, std::map<std::string, DetectionMetrics>> cells;
    std::map<std::string, std::string> roc_files;  // "<detector>_<condition>" -> csv

    for (const auto& table : tables) {
        for (const std::string detector : {"concept", "bits"}) {
            const auto samples = table.samples(detector);
            if (samples.empty()) continue;
            bool has_pos = false, has_neg = false;
            for (const auto& s : samples) (s.label ? has_pos : has_neg) = true;
            if (!has_pos || !has_neg) continue;
            cells[detector][table.condition] = compute_metrics(samples);
            roc_files[detector + "_" + table.condition] = roc_csv(roc_curve(samples));
            write_text_file(paths.reports / ("hist_" + detector + "_" + table.condition + ".csv"),
                            histogram_csv(samples));
        }
        if (const auto fused = fused_input(table)) {
            const RocCurve curve = fuse_or_roc(fused->a, fused->b, fused->labels);
            cells["fused"][table.condition] =
                metrics_from_curve(curve, fused->n_pos, fused->n_neg);
            roc_files["fused_" + table.condition] = roc_csv(curve);
        }
    }
    if (cells.empty()) throw std::runtime_error("score tables yielded no usable metrics");

    for (const auto& [stem, csv] : roc_files)
        write_text_file(paths.reports / ("roc_" + stem + ".csv"), csv);

    // Calibrated concept threshold from the clean arm of the unattacked set.
    std::optional<double> tau_concept;
    for (const auto& table : tables) {
        if (table.condition != "none") continue;
        std::vector<double> clean;
        for (const auto& r : table.rows)
            if (!r.label && r.concept_score) clean.push_back(*r.concept_score);
        if (!clean.empty()) tau_concept = calibrate_threshold(clean, alpha);
    }

    // CSV: percentages to two decimals; JSON: raw fractions.
    std::string csv = "detector,condition,auc,accuracy,tpr_at_5fpr,tpr_at_1fpr\n";
    json rows_json = json::array();
    json averages_json = json::array();
    for (const auto& [detector, by_condition] : cells) {
        DetectionMetrics sum;
        for (const auto& [condition, m] : by_condition) {
            csv += detector + "," + condition + "," + percent2(m.auc) + "," +
                   percent2(m.accuracy) + "," + percent2(m.tpr_at_5fpr) + "," +
                   percent2(m.tpr_at_1fpr) + "\n";
            rows_json.push_back({{"detector", detector},
                                 {"condition", condition},
                                 {"auc", m.auc},
                                 {"accuracy", m.accuracy},
                                 {"tpr_at_5fpr", m.tpr_at_5fpr},
                                 {"tpr_at_1fpr", m.tpr_at_1fpr}});
            sum.auc += m.auc;
            sum.accuracy += m.accuracy;
            sum.tpr_at_5fpr += m.tpr_at_5fpr;
            sum.tpr_at_1fpr += m.tpr_at_1fpr;
        }
        const double n = static_cast<double>(by_condition.size());
        const DetectionMetrics avg{sum.auc / n, sum.accuracy / n, sum.tpr_at_5fpr / n,
                                   sum.tpr_at_1fpr / n};
        csv += detector + ",average," + percent2(avg.auc) + "," + percent2(avg.accuracy) + "," +
               percent2(avg.tpr_at_5fpr) + "," + percent2(avg.tpr_at_1fpr) + "\n";
        averages_json.push_back({{"detector", detector},
                                 {"auc", avg.auc},
                                 {"accuracy", avg.accuracy},
                                 {"tpr_at_5fpr", avg.tpr_at_5fpr},
                                 {"tpr_at_1fpr", avg.tpr_at_1fpr}});
    }

    // Failure accounting across every stage that left a summary behind.
    json accounting = json::object();
    std::string accounting_txt;
    auto add_stage = [&](const std::string& stage, const StageAccounting& c,
                         const std::vector<std::string>& failures) {
        accounting[stage] = accounting_to_json(c);
        accounting[stage]["failures"] = failures;
        accounting_txt += stage + ": attempted=" + std::to_string(c.attempted) +
                          " succeeded=" + std::to_string(c.succeeded) +
                          " failed=" + std::to_string(c.failed) + "\n";
        for (const auto& f : failures) accounting_txt += "  failure " + f + "\n";
    };
    for (const auto& arm : load_arm_summaries(paths))
        add_stage("gen:" + arm.arm, arm.counts, arm.failures);
    if (std::filesystem::exists(paths.attacked)) {
        std::vector<std::filesystem::path> stage_files;
        for (const auto& entry : std::filesystem::directory_iterator(paths.attacked))
            if (entry.path().extension() == ".json") stage_files.push_back(entry.path());
        std::sort(stage_files.begin(), stage_files.end());
        for (const auto& f : stage_files) {
            const json doc = json::parse(read_text_file(f));
            add_stage("attack:" + doc.at("family").get<std::string>(),
                      accounting_from_json(doc.at("counts")),
                      doc.at("failures").get<std::vector<std::string>>());
        }
    }
    for (const auto& table : tables)
        add_stage("detect:" + table.condition, table.counts, table.failures);

    json report;
    report["alpha"] = alpha;
    report["rows"] = std::move(rows_json);
    report["averages"] = std::move(averages_json);
    report["accounting"] = std::move(accounting);
    report["calibrated_tau_concept"] = tau_concept ? json(*tau_concept) : json(nullptr);

    write_text_file(paths.reports / "metrics.csv", csv);
    write_text_file(paths.reports / "metrics.json", report.dump(2) + "\n");

    std::string txt = "metrics (percent)\n" + csv + "\n";
    if (tau_concept)
        txt += "calibrated concept threshold (alpha=" + format_double(alpha) +
               "): " + format_double(*tau_concept) + "\n";
    txt += "\nstage accounting\n" + accounting_txt;
    write_text_file(paths.reports / "report.txt", txt);
}

// ---------------------------------------------------------------- manifest

std::string RunManifest::to_json() const {
    json doc;
    doc["run_id"] = run_id;
    doc["toolkit_version"] = toolkit_version;
    doc["created"] = created;
    doc["config"] = json::parse(config.to_json());
    doc["db_fingerprint"] = db_fingerprint;
    doc["dataset_hash"] = dataset_hash;
    doc["wm_key_hex"] = wm_key_hex;
    doc["calibrated_tau_concept"] =
        calibrated_tau_concept ? json(*calibrated_tau_concept) : json(nullptr);
    return doc.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    const json doc = json::parse(text);
    RunManifest m;
    m.run_id = doc.at("run_id").get<std::string>();
    m.toolkit_version = doc.at("toolkit_version").get<std::string>();
    m.created = doc.at("created").get<std::string>();
    m.config = RunConfig::from_json(doc.at("config").dump());
    m.db_fingerprint = doc.at("db_fingerprint").get<std::string>();
    m.dataset_hash = doc.at("dataset_hash").get<std::string>();
    m.wm_key_hex = doc.at("wm_key_hex").get<std::string>();
    if (!doc.at("calibrated_tau_concept").is_null())
        m.calibrated_tau_concept = doc.at("calibrated_tau_concept").get<double>();
    return m;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    write_text_file(path, manifest.to_json());
}

RunManifest load_manifest(const std::filesystem::path& path) {
    return RunManifest::from_json(read_text_file(path));
}

// ---------------------------------------------------------------- full run

RunSummary run_full(const RunConfig& cfg, const std::filesystem::path& run_dir,
                    const std::string& run_id) {
    cfg.validate();
    const RunPaths paths = RunPaths::at(run_dir);
    paths.create();

    const ConceptDatabase db(cfg.concepts);
    std::vector<std::string> prompts = cfg.prompts;
    if (cfg.limit > 0 && prompts.size() > cfg.limit) prompts.resize(cfg.limit);
    const PromptDataset dataset =
        make_prompt_dataset(cfg.dataset_name, prompts, cfg.images_per_prompt);

    BackendSet backends(cfg, paths.cache);
    const PipelineBackends roles = backends.roles();
    if (!roles.generator || !roles.vlm)
        throw std::invalid_argument("run requires generator and vlm backends");

    const WatermarkKey key = WatermarkKey::from_seed(cfg.wm_key_seed);
    EmbedParams wm_params;
    wm_params.step = cfg.wm_step;
    const bool want_bits =
        std::find(cfg.detectors.begin(), cfg.detectors.end(), "bits") != cfg.detectors.end();

    RunSummary summary;
    summary.stages["gen:wm"] =
        run_generation(dataset, cfg.k, db, roles, cfg.seed, paths, "wm", cfg.parallelism,
                       want_bits ? &key : nullptr, wm_params)
            .counts;
    summary.stages["gen:clean"] = run_generation(dataset, 0, db, roles, cfg.seed, paths, "clean",
                                                 cfg.parallelism)
                                      .counts;

    for (const auto& name : cfg.attacks) {
        const AttackFamily family = parse_attack_family(name);
        summary.stages["attack:" + name] = run_attack_stage(
            paths, family, cfg.seed, roles.regen, cfg.regen_steps, cfg.parallelism);
    }

    std::vector<std::string> conditions{"none"};
    conditions.insert(conditions.end(), cfg.attacks.begin(), cfg.attacks.end());
    std::optional<double> tau_concept;
    for (const auto& condition : conditions) {
        const ScoreTable table = run_detection(paths, condition, cfg.detectors, db, *roles.vlm,
                                               key, wm_params, cfg.parallelism);
        summary.stages["detect:" + condition] = table.counts;
        if (condition == "none") {
            std::vector<double> clean;
            for (const auto& r : table.rows)
                if (!r.label && r.concept_score) clean.push_back(*r.concept_score);
            if (!clean.empty()) tau_concept = calibrate_threshold(clean, cfg.alpha);
        }
    }

    run_report(paths, cfg.alpha);

    RunManifest manifest;
    manifest.run_id = run_id;
    manifest.created = iso8601_utc_now();
    manifest.config = cfg;
    manifest.db_fingerprint = db.fingerprint();
    manifest.dataset_hash = dataset.content_hash();
    manifest.wm_key_hex = key.to_hex();
    manifest.calibrated_tau_concept = tau_concept;
    save_manifest(manifest, paths.root / "manifest.json");

    summary.manifest = manifest;
    if (backends.cache()) {
        summary.cache_hits = backends.cache()->hits();
        summary.cache_misses = backends.cache()->misses();
    }
    return summary;
}

RunSummary replay_manifest(const std::filesystem::path& manifest_path,
                           const std::filesystem::path& new_run_dir) {
    const RunManifest manifest = load_manifest(manifest_path);
    return run_full(manifest.config, new_run_dir, manifest.run_id);
}

}  // namespace iconmark
