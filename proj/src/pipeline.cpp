#include "anonpsy/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "anonpsy/baselines.hpp"
#include "anonpsy/evaluator.hpp"
#include "anonpsy/graph_yaml.hpp"
#include "anonpsy/narrator.hpp"
#include "anonpsy/perturber.hpp"
#include "anonpsy/prompts.hpp"
#include "anonpsy/text.hpp"
#include "anonpsy/yaml_reader.hpp"

namespace anonpsy {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kToolVersion = "anonpsy 0.1.0";
const char* const kBaselines[] = {"phi", "sdc", "llm_only"};

std::mutex g_log_mu;

void log_line(const std::string& line) {
    std::lock_guard lock(g_log_mu);
    std::cerr << line << '\n';
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
    if (!content.empty() && content.back() != '\n') out << '\n';
    if (!out) throw Error("write failed for " + p.string());
}

std::string lines(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& i : items) out += i + "\n";
    return out;
}

/// Outcome of one stage for one case: empty message means success.
struct CaseOutcome {
    std::string case_id;
    std::string error;
};

/// Run manifest at `<out>/manifest.yaml`, updated read-modify-write by each command.
class Manifest {
public:
    explicit Manifest(fs::path out_dir) : path_(std::move(out_dir) / "manifest.yaml") {
        if (fs::exists(path_)) doc_ = yaml::parse_file(path_);
        if (!doc_.is_object()) doc_ = yaml::Tree::object();
    }

    bool exists() const { return fs::exists(path_); }

    void stamp(const Runtime& rt) {
        const Config& c = rt.cfg;
        doc_["tool"] = std::string(kToolVersion);
        doc_["config_digest"] = c.digest();
        doc_["seed"] = c.seed;
        yaml::Tree models = yaml::Tree::object();
        models["backend"] = std::string(to_string(c.gateway.backend));
        models["chat"] = c.gateway.model;
        models["judge"] = c.eval.judge_model;
        models["embedding"] = rt.embedder->name();
        doc_["models"] = std::move(models);
        yaml::Tree temps = yaml::Tree::object();
        temps["convert"] = c.convert.temperature;
        temps["perturb"] = c.perturb.temperature;
        temps["generate_lead"] = c.generate.lead_temperature;
        temps["generate_sentence"] = c.generate.sentence_temperature;
        temps["generate_tail"] = c.generate.tail_temperature;
        temps["sdc"] = c.baselines.sdc_temperature;
        temps["llm_only_rewrite"] = temperature_for(Operator::llm_only_rewrite);
        temps["llm_only_critique"] = temperature_for(Operator::llm_only_critique);
        temps["predict_diagnoses"] = c.eval.predict_temperature;
        temps["judge"] = c.eval.judge_temperature;
        doc_["temperatures"] = std::move(temps);
        yaml::Tree hashes = yaml::Tree::object();
        for (const auto& [file, hash] : prompt_asset_hashes()) hashes[file] = hash;
        doc_["prompt_hashes"] = std::move(hashes);
        doc_["config"] = c.to_tree(c.base_dir);
    }

    void set_corpus(const fs::path& corpus_dir, const std::vector<CorpusCase>& cases) {
        doc_["corpus"] = fs::weakly_canonical(corpus_dir).generic_string();
        std::set<std::string> ids;
        if (doc_.contains("cases") && doc_["cases"].is_array())
            for (const auto& c : doc_["cases"]) ids.insert(c.get<std::string>());
        for (const auto& c : cases) ids.insert(c.case_id);
        doc_["cases"] = yaml::Tree::array();
        for (const auto& id : ids) doc_["cases"].push_back(id);
    }

    std::optional<fs::path> corpus() const {
        if (!doc_.contains("corpus") || !doc_["corpus"].is_string()) return std::nullopt;
        return fs::path(doc_["corpus"].get<std::string>());
    }

    std::vector<std::string> cases() const {
        std::vector<std::string> out;
        if (doc_.contains("cases") && doc_["cases"].is_array())
            for (const auto& c : doc_["cases"]) out.push_back(c.get<std::string>());
        return out;
    }

    void record(const std::string& stage, const std::vector<CaseOutcome>& outcomes,
                const std::vector<std::string>& notes = {}) {
        if (!doc_.contains("stages") || !doc_["stages"].is_object()) doc_["stages"] = yaml::Tree::object();
        yaml::Tree s = yaml::Tree::object();
        for (const auto& o : outcomes) s[o.case_id] = o.error.empty() ? std::string("ok") : "failed: " + o.error;
        yaml::Tree entry = yaml::Tree::object();
        entry["cases"] = std::move(s);
        if (!notes.empty()) entry["notes"] = notes;
        doc_["stages"][stage] = std::move(entry);
    }

    void save() const { write_text(path_, yaml::emit(doc_, {})); }

private:
    fs::path path_;
    yaml::Tree doc_;
};

int finish(const std::string& stage, const std::vector<CaseOutcome>& outcomes) {
    std::size_t failed = 0;
    for (const auto& o : outcomes)
        if (!o.error.empty()) ++failed;
    log_line(fmt::format("{}: {} of {} cases succeeded", stage, outcomes.size() - failed, outcomes.size()));
    return failed == 0 ? kExitOk : kExitCaseFailures;
}

std::vector<CaseOutcome> for_each_case(const std::vector<std::string>& ids, int jobs, const std::string& stage,
                                       const std::function<void(const std::string&)>& fn) {
    std::vector<CaseOutcome> outcomes(ids.size());
    parallel_for(ids.size(), jobs, [&](std::size_t i) {
        outcomes[i].case_id = ids[i];
        try {
            fn(ids[i]);
        } catch (const StageError& e) {
            outcomes[i].error = e.what();
            if (!e.trail().empty()) outcomes[i].error += " (stages: " + text::join(e.trail(), ", ") + ")";
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
        if (!outcomes[i].error.empty()) {
            std::string one_line = text::replace_all(outcomes[i].error, "\n", " | ");
            outcomes[i].error = one_line;
            log_line(fmt::format("{}: {} failed: {}", stage, ids[i], one_line));
        }
    });
    return outcomes;
}

std::vector<std::string> corpus_ids(const std::vector<CorpusCase>& corpus) {
    std::vector<std::string> ids;
    for (const auto& c : corpus) ids.push_back(c.case_id);
    return ids;
}

const CorpusCase& find_case(const std::vector<CorpusCase>& corpus, const std::string& id) {
    for (const auto& c : corpus)
        if (c.case_id == id) return c;
    throw Error("case " + id + " is not in the corpus");
}

std::vector<CorpusCase> checked_corpus(const fs::path& corpus_dir) {
    if (!fs::is_directory(corpus_dir)) throw UsageError("corpus directory not found: " + corpus_dir.string());
    try {
        return load_corpus(corpus_dir);
    } catch (const ParseError& e) {
        throw UsageError(std::string("corpus: ") + e.what());
    }
}

std::vector<std::string> run_cases(const Manifest& m, const fs::path& out_dir) {
    if (!m.exists()) throw UsageError("missing artifacts: " + (out_dir / "manifest.yaml").string() + " (run convert first)");
    return m.cases();
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const UsageError& e) {
        log_line(std::string("error: ") + e.what());
        return kExitUsage;
    }
}

}  // namespace

std::vector<CorpusCase> load_corpus(const fs::path& corpus_dir) {
    const fs::path path = corpus_dir / "manifest.yaml";
    const yaml::Tree doc = yaml::parse_file(path);
    yaml::MapReader top(doc, path.string(), {"cases"});
    std::vector<CorpusCase> out;
    std::set<std::string> seen;
    const auto& list = top.list("cases");
    for (std::size_t i = 0; i < list.size(); ++i) {
        yaml::MapReader r(list[i], top.path("cases") + "[" + std::to_string(i) + "]", {"case_id", "file", "diagnoses"});
        CorpusCase c;
        c.case_id = r.str("case_id");
        static const std::regex kId("^[A-Za-z0-9][A-Za-z0-9_.-]*$");
        if (!std::regex_match(c.case_id, kId)) throw ParseError(r.path("case_id"), "case id must be a plain file name");
        if (!seen.insert(c.case_id).second) throw ParseError(r.path("case_id"), "duplicate case id");
        c.file = corpus_dir / r.str_or("file", c.case_id + ".txt");
        c.diagnoses = r.str_list("diagnoses");
        out.push_back(std::move(c));
    }
    if (out.empty()) throw ParseError(path.string(), "corpus has no cases");
    return out;
}

CaseNarrative read_case(const CorpusCase& c) { return {c.case_id, read_text(c.file), c.diagnoses}; }

Runtime make_runtime(const Config& cfg, std::shared_ptr<ChatBackend> backend) {
    Runtime rt;
    rt.cfg = cfg;
    rt.backend = std::move(backend);
    GatewayOptions opts;
    opts.model = cfg.gateway.model;
    opts.seed = cfg.seed;
    opts.retry = cfg.gateway.retry;
    if (!cfg.gateway.cache_dir.empty()) opts.cache = std::make_shared<ResponseCache>(cfg.gateway.cache_dir);
    rt.gateway = std::make_unique<Gateway>(rt.backend, opts);
    GatewayOptions judge = opts;
    judge.model = cfg.eval.judge_model;
    rt.judge = std::make_unique<Gateway>(rt.backend, judge);
    if (cfg.embedding.backend == "http") {
        rt.embedder = std::make_unique<HttpEmbedder>(cfg.embedding.endpoint, cfg.embedding.model,
                                                     static_cast<std::size_t>(cfg.embedding.max_chars));
    } else {
        rt.embedder = std::make_unique<HashedEmbedder>();
    }
    return rt;
}

Runtime make_runtime(const Config& cfg) {
    std::shared_ptr<ChatBackend> backend;
    if (cfg.gateway.backend == BackendKind::mock) {
        if (cfg.gateway.mock_dir.empty()) throw UsageError("gateway.mock_dir is required for the mock backend");
        if (!fs::is_directory(cfg.gateway.mock_dir))
            throw UsageError("mock fixture directory not found: " + cfg.gateway.mock_dir.string());
        backend = std::make_shared<MockBackend>(cfg.gateway.mock_dir);
    } else {
        backend = std::make_shared<HttpBackend>(cfg.gateway.endpoint, std::chrono::seconds(cfg.gateway.timeout_s));
    }
    return make_runtime(cfg, std::move(backend));
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

int cmd_convert(const fs::path& corpus_dir, const fs::path& out_dir, Runtime& rt) {
    return guarded([&] {
        const auto corpus = checked_corpus(corpus_dir);
        Manifest manifest(out_dir);
        manifest.stamp(rt);
        manifest.set_corpus(corpus_dir, corpus);
        const auto outcomes = for_each_case(corpus_ids(corpus), rt.cfg.jobs, "convert", [&](const std::string& id) {
            const CaseNarrative x = read_case(find_case(corpus, id));
            const fs::path dir = out_dir / id;
            fs::create_directories(dir / "stages");
            ConvertLog log;
            try {
                const SemanticGraph g = convert(x, *rt.gateway, rt.cfg.convert, log,
                                                [&](const std::string& stage, const std::string& yaml) {
                                                    write_text(dir / "stages" / (stage + ".yaml"), yaml);
                                                });
                write_text(dir / "graph.yaml", serialize_yaml(g));
            } catch (...) {
                write_text(dir / "convert.log", log.render());
                throw;
            }
            write_text(dir / "convert.log", log.render());
        });
        manifest.record("convert", outcomes);
        manifest.save();
        return finish("convert", outcomes);
    });
}

int cmd_perturb(const fs::path& out_dir, Runtime& rt) {
    return guarded([&] {
        Manifest manifest(out_dir);
        const auto ids = run_cases(manifest, out_dir);
        PerturbData data;
        try {
            data = load_perturb_data(rt.cfg.data_dir);
        } catch (const ParseError& e) {
            throw UsageError(std::string("perturbation data: ") + e.what());
        }
        manifest.stamp(rt);
        const auto outcomes = for_each_case(ids, rt.cfg.jobs, "perturb", [&](const std::string& id) {
            const fs::path dir = out_dir / id;
            if (!fs::exists(dir / "graph.yaml")) throw Error("missing artifact " + (dir / "graph.yaml").string());
            const SemanticGraph g = parse_yaml(read_text(dir / "graph.yaml"));
            const PerturbResult r = perturb(g, *rt.gateway, rt.cfg.perturb, data, id, rt.embedder.get());
            write_text(dir / "graph.perturbed.yaml", serialize_yaml(r.graph));
            write_text(dir / "perturb.audit.yaml", yaml::emit(r.audit.to_tree(), {}));
        });
        manifest.record("perturb", outcomes);
        manifest.save();
        return finish("perturb", outcomes);
    });
}

int cmd_generate(const fs::path& out_dir, Runtime& rt) {
    return guarded([&] {
        Manifest manifest(out_dir);
        const auto ids = run_cases(manifest, out_dir);
        manifest.stamp(rt);
        const auto outcomes = for_each_case(ids, rt.cfg.jobs, "generate", [&](const std::string& id) {
            const fs::path dir = out_dir / id;
            const fs::path input = dir / "graph.perturbed.yaml";
            if (!fs::exists(input)) throw Error("missing artifact " + input.string());
            const SemanticGraph g = parse_yaml(read_text(input));
            NarratorOptions opt = rt.cfg.generate;
            opt.case_id = id;
            const GeneratedNarrative n = generate(g, *rt.gateway, opt);
            write_text(dir / "outline.yaml", n.outline.to_yaml());
            write_text(dir / "generate.log", lines(n.flags));
            write_text(dir / "deid.txt", n.text);
        });
        manifest.record("generate", outcomes);
        manifest.save();
        return finish("generate", outcomes);
    });
}

int cmd_run(const fs::path& corpus_dir, const fs::path& out_dir, Runtime& rt) {
    const int convert_status = cmd_convert(corpus_dir, out_dir, rt);
    if (convert_status == kExitUsage) return convert_status;
    const int perturb_status = cmd_perturb(out_dir, rt);
    if (perturb_status == kExitUsage) return perturb_status;
    const int generate_status = cmd_generate(out_dir, rt);
    return std::max({convert_status, perturb_status, generate_status});
}

int cmd_baseline(const std::string& name, const fs::path& corpus_dir, const fs::path& out_dir, Runtime& rt) {
    return guarded([&] {
        if (std::none_of(std::begin(kBaselines), std::end(kBaselines), [&](const char* b) { return name == b; }))
            throw UsageError("unknown baseline '" + name + "' (expected phi, sdc or llm_only)");
        const auto corpus = checked_corpus(corpus_dir);
        Manifest manifest(out_dir);
        manifest.stamp(rt);
        manifest.set_corpus(corpus_dir, corpus);
        std::unique_ptr<NerBackend> ner;
        if (rt.cfg.baselines.ner == "heuristic") ner = std::make_unique<HeuristicNer>();
        std::vector<std::string> notes;
        if (name == "phi" && !ner) notes.emplace_back("regex-only mode (no NER backend)");
        const auto outcomes = for_each_case(corpus_ids(corpus), rt.cfg.jobs, "baseline " + name, [&](const std::string& id) {
            const CaseNarrative x = read_case(find_case(corpus, id));
            BaselineOptions opt{id, rt.cfg.baselines.sdc_temperature, rt.cfg.convert.max_attempts};
            std::string out;
            if (name == "phi") out = phi_mask(x.text, ner.get()).text;
            if (name == "sdc") out = sdc_rewrite(x.text, *rt.gateway, opt);
            if (name == "llm_only") out = llm_only(x.text, *rt.gateway, opt).final_text;
            write_text(out_dir / id / ("baseline." + name + ".txt"), out);
        });
        manifest.record("baseline." + name, outcomes, notes);
        manifest.save();
        return finish("baseline " + name, outcomes);
    });
}

int cmd_eval(const fs::path& out_dir, Runtime& rt) {
    return guarded([&] {
        Manifest manifest(out_dir);
        const auto ids = run_cases(manifest, out_dir);
        const auto corpus_dir = manifest.corpus();
        if (!corpus_dir) throw UsageError("manifest does not name a corpus");
        const auto corpus = checked_corpus(*corpus_dir);

        std::vector<std::string> missing;
        for (const auto& id : ids)
            if (!fs::exists(out_dir / id / "deid.txt")) missing.push_back((out_dir / id / "deid.txt").string());
        if (missing.size() == ids.size())
            throw UsageError("missing artifacts: " + text::join(missing, ", ") + " (run generate first)");

        DiagnosisCanon canon;
        try {
            canon = load_diagnosis_canon(rt.cfg.data_dir / "specifiers.yaml", rt.cfg.data_dir / "synonyms.yaml");
        } catch (const ParseError& e) {
            throw UsageError(std::string("evaluation data: ") + e.what());
        }
        const LabelMatcher matcher =
            rt.cfg.embedding.backend == "http" ? embedding_matcher(*rt.embedder) : exact_matcher();
        manifest.stamp(rt);

        EvalReport report;
        report.cases.resize(ids.size());
        const auto outcomes = for_each_case(ids, rt.cfg.jobs, "eval", [&](const std::string& id) {
            const auto index = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
            CaseMetrics& m = report.cases[index];
            m.case_id = id;
            const CaseNarrative original = read_case(find_case(corpus, id));
            const fs::path dir = out_dir / id;
            if (!fs::exists(dir / "deid.txt")) throw Error("missing artifact " + (dir / "deid.txt").string());

            std::vector<std::pair<std::string, std::string>> variants{{"original", original.text},
                                                                       {"anonpsy", read_text(dir / "deid.txt")}};
            for (const char* b : kBaselines)
                if (fs::exists(dir / (std::string("baseline.") + b + ".txt")))
                    variants.emplace_back(b, read_text(dir / (std::string("baseline.") + b + ".txt")));

            const auto gold = make_label_set(original.ground_truth_diagnoses, canon);
            for (const auto& [name, body] : variants) {
                VariantMetrics& vm = m.variants[name];
                if (name != "original") vm.cosine = doc_similarity(original.text, body, *rt.embedder);
                if (!rt.cfg.eval.predict_diagnoses) continue;
                try {
                    vm.predicted = predict_diagnoses(
                        body, *rt.judge,
                        {id, name, rt.cfg.eval.predict_temperature, rt.cfg.convert.max_attempts});
                    vm.soft_f1 = soft_f1(make_label_set(vm.predicted, canon), gold, matcher, rt.cfg.eval.theta).f1;
                } catch (const GatewayError& e) {
                    m.flags.push_back(name + ": diagnosis prediction failed: " + e.what());
                }
            }

            const auto& candidate = rt.cfg.eval.judge_candidate;
            auto cand = std::find_if(variants.begin(), variants.end(), [&](const auto& v) { return v.first == candidate; });
            if (rt.cfg.eval.judge && cand != variants.end() && candidate != "anonpsy") {
                Rng rng = case_rng(rt.cfg.seed, id + "/judge");
                JudgeRecord rec;
                rec.candidate = candidate;
                rec.anonpsy_is_a = uniform_unit(rng) < 0.5;
                const std::string& ours = variants[1].second;
                try {
                    rec.verdict = judge_risk(original.text, rec.anonpsy_is_a ? ours : cand->second,
                                             rec.anonpsy_is_a ? cand->second : ours, *rt.judge,
                                             {id, candidate, rt.cfg.eval.judge_temperature, rt.cfg.convert.max_attempts});
                    m.judge = rec;
                } catch (const GatewayError& e) {
                    m.flags.push_back(std::string("judge: excluded: ") + e.what());
                }
            }
        });
        for (std::size_t i = 0; i < ids.size(); ++i) report.cases[i].case_id = ids[i];
        report.cases.erase(std::remove_if(report.cases.begin(), report.cases.end(),
                                          [](const CaseMetrics& c) { return c.variants.empty(); }),
                           report.cases.end());
        summarize(report);
        write_text(out_dir / "report.yaml", report.to_yaml());
        write_text(out_dir / "report.csv", report.to_csv());
        std::vector<std::string> notes;
        if (!missing.empty()) notes.push_back("missing artifacts: " + text::join(missing, ", "));
        manifest.record("eval", outcomes, notes);
        manifest.save();
        return finish("eval", outcomes);
    });
}

}  // namespace anonpsy
