#include "anonpsy/config.hpp"

#include <cstdlib>

#include "anonpsy/digest.hpp"
#include "anonpsy/yaml_reader.hpp"

namespace anonpsy {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string display_path(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty()) return {};
    if (base.empty()) return p.generic_string();
    const auto rel = p.lexically_relative(base);
    return rel.empty() ? p.generic_string() : rel.generic_string();
}

BackendKind parse_backend(const std::string& s, const std::string& path) {
    if (s == "live") return BackendKind::live;
    if (s == "mock") return BackendKind::mock;
    throw ParseError(path, "backend must be live or mock, got '" + s + "'");
}

double probability(const yaml::MapReader& r, std::string_view key, double fallback) {
    const double v = r.real_or(key, fallback);
    if (v < 0.0 || v > 1.0) throw ParseError(r.path(key), "expected a value in [0, 1]");
    return v;
}

int positive(const yaml::MapReader& r, std::string_view key, int fallback, int min = 1) {
    const auto v = r.integer_or(key, fallback);
    if (v < min) throw ParseError(r.path(key), "expected an integer >= " + std::to_string(min));
    return static_cast<int>(v);
}

}  // namespace

Config config_from_tree(const yaml::Tree& doc, const std::filesystem::path& base, const std::string& origin) {
    Config c;
    c.base_dir = base;
    if (doc.is_null()) return c;
    yaml::MapReader top(doc, origin,
                        {"seed", "jobs", "data_dir", "gateway", "embedding", "convert", "perturb", "generate",
                         "baselines", "eval"});
    c.seed = top.integer_or("seed", c.seed);
    c.jobs = positive(top, "jobs", c.jobs);
    if (top.has("data_dir")) c.data_dir = resolve(base, top.str("data_dir"));

    if (top.has("gateway")) {
        yaml::MapReader r(top.child("gateway"), top.path("gateway"),
                          {"backend", "endpoint", "model", "mock_dir", "cache_dir", "timeout_s", "retry_attempts",
                           "retry_backoff_ms"});
        auto& g = c.gateway;
        if (r.has("backend")) g.backend = parse_backend(r.str("backend"), r.path("backend"));
        g.endpoint = r.str_or("endpoint", g.endpoint);
        g.model = r.str_or("model", g.model);
        g.mock_dir = resolve(base, r.str_or("mock_dir", ""));
        g.cache_dir = resolve(base, r.str_or("cache_dir", ""));
        g.timeout_s = positive(r, "timeout_s", g.timeout_s);
        g.retry.attempts = positive(r, "retry_attempts", g.retry.attempts);
        g.retry.initial_backoff = std::chrono::milliseconds(
            positive(r, "retry_backoff_ms", static_cast<int>(g.retry.initial_backoff.count()), 0));
    }
    if (top.has("embedding")) {
        yaml::MapReader r(top.child("embedding"), top.path("embedding"), {"backend", "endpoint", "model", "max_chars"});
        auto& e = c.embedding;
        e.backend = r.str_or("backend", e.backend);
        if (e.backend != "hashed" && e.backend != "http")
            throw ParseError(r.path("backend"), "expected hashed or http");
        e.endpoint = r.str_or("endpoint", e.endpoint);
        e.model = r.str_or("model", e.model);
        e.max_chars = positive(r, "max_chars", static_cast<int>(e.max_chars));
    }
    if (top.has("convert")) {
        yaml::MapReader r(top.child("convert"), top.path("convert"), {"temperature", "max_attempts"});
        c.convert.temperature = r.real_or("temperature", c.convert.temperature);
        c.convert.max_attempts = positive(r, "max_attempts", c.convert.max_attempts);
    }
    if (top.has("perturb")) {
        yaml::MapReader r(top.child("perturb"), top.path("perturb"),
                          {"age_offset_bound_years", "sex_flip_probability", "steb_window_size", "similarity_threshold",
                           "similarity_backend", "max_retries", "temperature", "minor_age", "minor_occupations"});
        auto& p = c.perturb;
        p.age_offset_bound_years = positive(r, "age_offset_bound_years", p.age_offset_bound_years);
        p.sex_flip_probability = probability(r, "sex_flip_probability", p.sex_flip_probability);
        p.steb_window_size = positive(r, "steb_window_size", p.steb_window_size, 0);
        p.similarity_threshold = probability(r, "similarity_threshold", p.similarity_threshold);
        if (r.has("similarity_backend")) {
            const auto b = r.str("similarity_backend");
            if (b == "embedding") {
                p.similarity = SimilarityBackend::embedding;
            } else if (b == "trigram") {
                p.similarity = SimilarityBackend::trigram;
            } else {
                throw ParseError(r.path("similarity_backend"), "expected embedding or trigram");
            }
        }
        p.max_retries = positive(r, "max_retries", p.max_retries, 0);
        p.temperature = r.real_or("temperature", p.temperature);
        p.minor_age = positive(r, "minor_age", p.minor_age, 0);
        if (r.has("minor_occupations")) p.minor_occupations = r.str_list("minor_occupations");
    }
    if (top.has("generate")) {
        yaml::MapReader r(top.child("generate"), top.path("generate"),
                          {"lead_temperature", "sentence_temperature", "tail_temperature", "max_attempts"});
        auto& n = c.generate;
        n.lead_temperature = r.real_or("lead_temperature", n.lead_temperature);
        n.sentence_temperature = r.real_or("sentence_temperature", n.sentence_temperature);
        n.tail_temperature = r.real_or("tail_temperature", n.tail_temperature);
        n.max_attempts = positive(r, "max_attempts", n.max_attempts);
    }
    if (top.has("baselines")) {
        yaml::MapReader r(top.child("baselines"), top.path("baselines"), {"sdc_temperature", "ner"});
        c.baselines.sdc_temperature = r.real_or("sdc_temperature", c.baselines.sdc_temperature);
        c.baselines.ner = r.str_or("ner", c.baselines.ner);
        if (c.baselines.ner != "heuristic" && c.baselines.ner != "none")
            throw ParseError(r.path("ner"), "expected heuristic or none");
    }
    if (top.has("eval")) {
        yaml::MapReader r(top.child("eval"), top.path("eval"),
                          {"theta", "predict_diagnoses", "predict_temperature", "judge", "judge_model",
                           "judge_temperature", "judge_candidate"});
        auto& e = c.eval;
        e.theta = probability(r, "theta", e.theta);
        e.predict_diagnoses = r.boolean_or("predict_diagnoses", e.predict_diagnoses);
        e.predict_temperature = r.real_or("predict_temperature", e.predict_temperature);
        e.judge = r.boolean_or("judge", e.judge);
        e.judge_model = r.str_or("judge_model", e.judge_model);
        e.judge_temperature = r.real_or("judge_temperature", e.judge_temperature);
        e.judge_candidate = r.str_or("judge_candidate", e.judge_candidate);
    }
    c.perturb.seed = c.seed;
    return c;
}

Config load_config(const std::filesystem::path& path) {
    yaml::Tree doc;
    try {
        doc = yaml::parse_file(path);
    } catch (const ParseError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    try {
        return config_from_tree(doc, path.parent_path(), path.filename().string());
    } catch (const ParseError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

void apply_env_overrides(Config& cfg) {
    if (const char* v = std::getenv("ANONPSY_ENDPOINT"); v && *v) cfg.gateway.endpoint = v;
    if (const char* v = std::getenv("ANONPSY_MODEL"); v && *v) cfg.gateway.model = v;
}

yaml::Tree Config::to_tree(const std::filesystem::path& base) const {
    using yaml::Tree;
    Tree t = Tree::object();
    t["seed"] = seed;
    t["jobs"] = jobs;
    t["data_dir"] = display_path(data_dir, base);
    Tree g = Tree::object();
    g["backend"] = std::string(to_string(gateway.backend));
    g["endpoint"] = gateway.endpoint;
    g["model"] = gateway.model;
    g["mock_dir"] = display_path(gateway.mock_dir, base);
    g["cache_dir"] = display_path(gateway.cache_dir, base);
    g["timeout_s"] = gateway.timeout_s;
    g["retry_attempts"] = gateway.retry.attempts;
    g["retry_backoff_ms"] = static_cast<std::int64_t>(gateway.retry.initial_backoff.count());
    t["gateway"] = std::move(g);
    Tree e = Tree::object();
    e["backend"] = embedding.backend;
    e["endpoint"] = embedding.endpoint;
    e["model"] = embedding.model;
    e["max_chars"] = embedding.max_chars;
    t["embedding"] = std::move(e);
    t["convert"] = Tree::object();
    t["convert"]["temperature"] = convert.temperature;
    t["convert"]["max_attempts"] = convert.max_attempts;
    Tree p = Tree::object();
    p["age_offset_bound_years"] = perturb.age_offset_bound_years;
    p["sex_flip_probability"] = perturb.sex_flip_probability;
    p["steb_window_size"] = perturb.steb_window_size;
    p["similarity_threshold"] = perturb.similarity_threshold;
    p["similarity_backend"] = perturb.similarity == SimilarityBackend::embedding ? "embedding" : "trigram";
    p["max_retries"] = perturb.max_retries;
    p["temperature"] = perturb.temperature;
    p["minor_age"] = perturb.minor_age;
    p["minor_occupations"] = perturb.minor_occupations;
    t["perturb"] = std::move(p);
    Tree n = Tree::object();
    n["lead_temperature"] = generate.lead_temperature;
    n["sentence_temperature"] = generate.sentence_temperature;
    n["tail_temperature"] = generate.tail_temperature;
    n["max_attempts"] = generate.max_attempts;
    t["generate"] = std::move(n);
    t["baselines"] = Tree::object();
    t["baselines"]["sdc_temperature"] = baselines.sdc_temperature;
    t["baselines"]["ner"] = baselines.ner;
    Tree v = Tree::object();
    v["theta"] = eval.theta;
    v["predict_diagnoses"] = eval.predict_diagnoses;
    v["predict_temperature"] = eval.predict_temperature;
    v["judge"] = eval.judge;
    v["judge_model"] = eval.judge_model;
    v["judge_temperature"] = eval.judge_temperature;
    v["judge_candidate"] = eval.judge_candidate;
    t["eval"] = std::move(v);
    return t;
}

std::string Config::digest() const { return sha256_hex(yaml::emit(to_tree(base_dir), {})); }

}  // namespace anonpsy
