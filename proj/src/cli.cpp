#include "paq/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "paq/error.hpp"
#include "paq/eval.hpp"
#include "paq/genpipe.hpp"
#include "paq/jsonl.hpp"
#include "paq/rerank.hpp"
#include "paq/retrieve.hpp"
#include "paq/selective.hpp"
#include "paq/subprocess.hpp"
#include "paq/synthetic.hpp"
#include "paq/text.hpp"

namespace paq::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Re-throws a library error with the failing stage in front of the message.
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), e.code(), std::string("[") + name + "] " + e.what());
    }
}

void log_config(std::ostream& err, std::string_view command, const ordered_json& config) {
    err << "paq " << command << ": config " << dump_line(config) << '\n';
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

EmbedderSpec parse_embedder(const std::string& text, size_t dim, std::uint64_t seed) {
    EmbedderSpec spec;
    spec.dim = dim;
    spec.seed = seed;
    if (text.empty() || text == "feature-hash") {
        spec.kind = EmbedderKind::feature_hash;
    } else if (text.rfind("external-file:", 0) == 0) {
        spec.kind = EmbedderKind::external_file;
        spec.source = text.substr(std::string_view("external-file:").size());
    } else if (is_subprocess_spec(text)) {
        spec.kind = EmbedderKind::subprocess;
        spec.source = subprocess_command(text);
    } else {
        throw_usage("unknown embedder '" + text +
                    "' (feature-hash | external-file:<vectors> | subprocess:<command>)");
    }
    validate_spec(spec);
    return spec;
}

QuantMode parse_quant(const std::string& text) {
    if (text == "none" || text == "fp32") return QuantMode::none;
    if (text == "int8") return QuantMode::int8_per_dim;
    throw_usage("unknown quantization '" + text + "' (none | int8)");
}

std::string_view quant_name(QuantMode mode) {
    return mode == QuantMode::int8_per_dim ? "int8" : "none";
}

ordered_json embedder_json(const EmbedderSpec& spec) {
    ordered_json j;
    j["kind"] = std::string(to_string(spec.kind));
    j["dim"] = spec.dim;
    j["seed"] = spec.seed;
    j["normalize"] = spec.normalize;
    j["source"] = spec.source;
    return j;
}

EmbedderSpec embedder_from_json(const nlohmann::json& j) {
    EmbedderSpec spec;
    spec.kind = embedder_kind_from_string(j.at("kind").get<std::string>());
    spec.dim = j.at("dim").get<size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.normalize = j.at("normalize").get<bool>();
    spec.source = j.at("source").get<std::string>();
    return spec;
}

ordered_json index_json(const IndexBuildSpec& spec) {
    ordered_json j;
    j["kind"] = std::string(to_string(spec.kind));
    j["m"] = spec.hnsw.m;
    j["ef_construction"] = spec.hnsw.ef_construction;
    j["ef_search"] = spec.hnsw.ef_search;
    j["seed"] = spec.hnsw.seed;
    j["quantize"] = std::string(quant_name(spec.quant));
    return j;
}

IndexBuildSpec index_from_json(const nlohmann::json& j) {
    IndexBuildSpec spec;
    const auto kind = j.at("kind").get<std::string>();
    spec.kind = kind == "flat" ? IndexKind::flat : IndexKind::hnsw;
    spec.hnsw.m = j.at("m").get<size_t>();
    spec.hnsw.ef_construction = j.at("ef_construction").get<size_t>();
    spec.hnsw.ef_search = j.at("ef_search").get<size_t>();
    spec.hnsw.seed = j.at("seed").get<std::uint64_t>();
    spec.quant = parse_quant(j.at("quantize").get<std::string>());
    return spec;
}

fs::path manifest_path(const fs::path& index) {
    return fs::path(index.string() + ".manifest.json");
}

fs::path kb_path_for(const fs::path& index) {
    return fs::path(index.string() + ".kb.jsonl");
}

nlohmann::json read_manifest(const fs::path& index) {
    const auto path = manifest_path(index);
    const auto text = read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw_domain(path.string() + ": " + e.what(), ErrorCode::malformed);
    }
}

// Everything needed to answer questions from a built index.
struct Loaded {
    std::shared_ptr<const KnowledgeBase> kb;
    std::shared_ptr<const VectorIndex> index;
    std::shared_ptr<const Embedder> embedder;
    EmbedderSpec embedder_spec;
    IndexBuildSpec index_spec;
};

Loaded load_system(const fs::path& index_path, const std::string& kb_override) {
    Loaded sys;
    const auto manifest = stage("manifest", [&] { return read_manifest(index_path); });
    try {
        sys.embedder_spec = embedder_from_json(manifest.at("embedder"));
        sys.index_spec = index_from_json(manifest.at("index"));
    } catch (const nlohmann::json::exception& e) {
        throw_domain("[manifest] " + manifest_path(index_path).string() + ": " + e.what(),
                     ErrorCode::malformed);
    }
    const fs::path kb_path = kb_override.empty() ? kb_path_for(index_path) : fs::path(kb_override);
    sys.kb = stage("kb", [&] { return std::make_shared<const KnowledgeBase>(load_kb(kb_path)); });
    sys.index = stage("index", [&] {
        return std::shared_ptr<const VectorIndex>(load_index(index_path));
    });
    sys.embedder = stage("embed", [&] {
        return std::shared_ptr<const Embedder>(make_embedder(sys.embedder_spec));
    });
    return sys;
}

std::unique_ptr<CrossScorer> make_scorer(const std::string& text) {
    if (text == "lexical") {
        return std::make_unique<LexicalScorer>();
    }
    if (is_subprocess_spec(text)) {
        return std::make_unique<SubprocessScorer>(subprocess_command(text));
    }
    throw_usage("unknown scorer '" + text + "' (lexical | subprocess:<command>)");
}

ConfidenceFrom parse_confidence(const std::string& text) {
    if (text == "auto") return ConfidenceFrom::automatic;
    if (text == "retriever") return ConfidenceFrom::retriever;
    if (text == "reranker") return ConfidenceFrom::reranker;
    throw_usage("unknown confidence source '" + text + "' (auto | retriever | reranker)");
}

double parse_threshold(const std::string& text) {
    if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw_usage("threshold '" + text + "' is not a number");
    }
}

std::vector<size_t> parse_budgets(const std::string& text) {
    std::vector<size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(static_cast<size_t>(std::stoull(std::string(paq::trim(item)))));
        } catch (const std::exception&) {
            throw_usage("budget '" + item + "' is not a count");
        }
    }
    if (out.empty()) {
        throw_usage("--sweep needs at least one budget");
    }
    return out;
}

std::vector<std::string> read_questions(const fs::path& path) {
    std::vector<std::string> out;
    for (auto& line : read_lines(path)) {
        if (!paq::trim(line).empty()) {
            out.push_back(std::move(line));
        }
    }
    return out;
}

ordered_json prediction_json(std::string_view question, const AnswerPrediction& p, size_t k) {
    ordered_json j;
    j["question"] = std::string(question);
    j["answer"] = p.answer;
    j["confidence"] = p.confidence;
    if (p.matches.empty()) {
        j["matched_question"] = nullptr;
        j["matched_id"] = nullptr;
    } else {
        j["matched_question"] = p.matches.front().pair.question;
        j["matched_id"] = p.matches.front().pair.id;
    }
    j["source"] = std::string(to_string(p.source));
    if (k > 1) {
        ordered_json matches = ordered_json::array();
        for (const auto& m : p.matches) {
            ordered_json mj;
            mj["id"] = m.pair.id;
            mj["question"] = m.pair.question;
            mj["answer"] = m.pair.answer;
            mj["score"] = m.score;
            matches.push_back(std::move(mj));
        }
        j["matches"] = std::move(matches);
    }
    return j;
}

std::string tsv_number(double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

// Options shared by the commands that answer questions.
struct AnswerFlags {
    size_t k = 1;
    bool rerank = false;
    std::string scorer = "lexical";
    size_t rerank_candidates = 50;
    std::string confidence = "auto";
    size_t ef_search = 0;
    size_t threads = 1;

    void add(CLI::App* cmd) {
        cmd->add_option("--k", k, "matches reported per question")->check(CLI::PositiveNumber);
        cmd->add_flag("--rerank", rerank, "rescore retrieved candidates before answering");
        cmd->add_option("--scorer", scorer, "cross scorer: lexical | subprocess:<command>");
        cmd->add_option("--rerank-candidates", rerank_candidates, "candidates rescored")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--confidence", confidence, "auto | retriever | reranker");
        cmd->add_option("--ef-search", ef_search, "HNSW search width (0 = index default)");
        cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    }

    AnswerConfig resolve(std::unique_ptr<CrossScorer>& holder) const {
        AnswerConfig cfg;
        cfg.k = k;
        cfg.rerank_candidates = rerank_candidates;
        cfg.confidence = parse_confidence(confidence);
        cfg.threads = threads;
        if (ef_search > 0) {
            cfg.ef_search = ef_search;
        }
        if (rerank) {
            holder = make_scorer(scorer);
            cfg.reranker = holder.get();
        }
        return cfg;
    }

    ordered_json json() const {
        ordered_json j;
        j["k"] = k;
        j["rerank"] = rerank;
        j["scorer"] = rerank ? ordered_json(scorer) : ordered_json(nullptr);
        j["rerank_candidates"] = rerank_candidates;
        j["confidence"] = confidence;
        j["ef_search"] = ef_search;
        j["threads"] = threads;
        return j;
    }
};

// ---- build-index ---------------------------------------------------------

struct BuildIndexCmd {
    std::vector<std::string> kbs;
    std::string out;
    std::string from_manifest;
    std::string embedder = "feature-hash";
    size_t dim = kDefaultEmbedDim;
    std::uint64_t seed = 0;
    bool flat = false;
    bool hnsw = false;
    size_t m = 32;
    size_t ef_construction = 80;
    size_t ef_search = 32;
    std::string quantize = "none";
    size_t threads = 1;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "build-index",
            "Embed and index QA knowledge bases.\n"
            "  KB file: lines {\"id\",\"question\",\"answer\",\"score\",\"passage_id\",\"source\"}\n"
            "  writes <out> (index), <out>.kb.jsonl (merged KB), <out>.manifest.json");
        cmd->add_option("kbs", kbs, "KB files, concatenated in order");
        cmd->add_option("--out,-o", out, "index file")->required();
        cmd->add_option("--from-manifest", from_manifest,
                        "rebuild with the inputs and settings of an existing manifest");
        cmd->add_option("--embedder", embedder,
                        "feature-hash | external-file:<vectors> | subprocess:<command>");
        cmd->add_option("--dim", dim, "embedding dimension");
        cmd->add_option("--seed", seed, "embedder and index seed");
        auto* f = cmd->add_flag("--flat", flat, "exact flat index");
        auto* h = cmd->add_flag("--hnsw", hnsw, "HNSW index (default)");
        f->excludes(h);
        cmd->add_option("--m", m, "HNSW out-degree");
        cmd->add_option("--ef-construction", ef_construction, "HNSW build width");
        cmd->add_option("--ef-search", ef_search, "HNSW default search width");
        cmd->add_option("--quantize", quantize, "none | int8");
        cmd->add_option("--threads", threads, "embedding threads")->check(CLI::PositiveNumber);
    }

    int exec(std::ostream& out_s, std::ostream& err) {
        EmbedderSpec espec;
        IndexBuildSpec ispec;
        std::vector<std::string> inputs = kbs;
        if (!from_manifest.empty()) {
            const auto text = read_file(from_manifest);
            try {
                const auto j = nlohmann::json::parse(text);
                inputs = j.at("kb_inputs").get<std::vector<std::string>>();
                espec = embedder_from_json(j.at("embedder"));
                ispec = index_from_json(j.at("index"));
            } catch (const nlohmann::json::exception& e) {
                throw_domain("[manifest] " + from_manifest + ": " + e.what(), ErrorCode::malformed);
            }
        } else {
            espec = parse_embedder(embedder, dim, seed);
            ispec.kind = flat ? IndexKind::flat : IndexKind::hnsw;
            ispec.hnsw = {m, ef_construction, ef_search, seed};
            ispec.quant = parse_quant(quantize);
        }
        if (inputs.empty()) {
            throw_usage("build-index needs at least one KB file");
        }
        if (ispec.kind == IndexKind::hnsw) {
            validate_params(ispec.hnsw);
        }

        ordered_json config;
        config["kb_inputs"] = inputs;
        config["out"] = out;
        config["embedder"] = embedder_json(espec);
        config["index"] = index_json(ispec);
        config["threads"] = threads;
        log_config(err, "build-index", config);

        std::vector<KnowledgeBase> parts;
        for (const auto& p : inputs) {
            parts.push_back(stage("kb", [&] { return load_kb(p); }));
        }
        auto merged = stage("kb", [&] { return concat_kbs(parts); });
        const auto& kb = merged.kb;

        auto t0 = Clock::now();
        Matrix vectors = stage("embed", [&] {
            if (espec.kind == EmbedderKind::external_file) {
                return embed_kb(kb, espec);
            }
            const auto emb = make_embedder(espec);
            return embed_kb(kb, *emb, threads);
        });
        err << "paq build-index: embedded " << kb.size() << " questions in "
            << seconds_since(t0) << " s\n";

        std::vector<std::int64_t> ids;
        ids.reserve(kb.size());
        for (const auto& p : kb.pairs()) {
            ids.push_back(p.id);
        }
        t0 = Clock::now();
        const auto index = stage("index", [&] { return build_index(vectors, ids, ispec); });
        err << "paq build-index: built " << to_string(ispec.kind) << " index in "
            << seconds_since(t0) << " s\n";

        const fs::path index_path(out);
        stage("save", [&] {
            save_index(*index, index_path);
            save_kb(kb, kb_path_for(index_path));
        });

        ordered_json manifest;
        manifest["format"] = "paq-index-manifest";
        manifest["version"] = 1;
        manifest["index_file"] = index_path.filename().string();
        manifest["kb_file"] = kb_path_for(index_path).filename().string();
        manifest["kb_inputs"] = inputs;
        manifest["embedder"] = embedder_json(espec);
        manifest["index"] = index_json(ispec);
        manifest["count"] = kb.size();
        manifest["dim"] = espec.dim;
        ordered_json mappings = ordered_json::array();
        for (const auto& m_ : merged.mapping) {
            ordered_json mj;
            mj["source"] = inputs[m_.source_index];
            mj["source_index"] = m_.source_index;
            mj["original_id"] = m_.original_id;
            mj["new_id"] = m_.new_id;
            mappings.push_back(std::move(mj));
        }
        manifest["id_mappings"] = std::move(mappings);
        stage("save", [&] { write_file(manifest_path(index_path), manifest.dump(2) + "\n"); });

        out_s << "indexed " << kb.size() << " pairs -> " << index_path.string() << '\n';
        return 0;
    }
};

// ---- query ---------------------------------------------------------------

struct QueryCmd {
    std::string index;
    std::string kb;
    std::vector<std::string> questions;
    std::string batch;
    AnswerFlags flags;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "query",
            "Answer questions from an index.\n"
            "  --batch: one question per line\n"
            "  output lines {\"question\",\"answer\",\"confidence\",\"matched_question\","
            "\"matched_id\",\"source\"}");
        cmd->add_option("--index,-i", index, "index file from build-index")->required();
        cmd->add_option("--kb", kb, "KB file (default <index>.kb.jsonl)");
        cmd->add_option("questions", questions, "questions to answer");
        cmd->add_option("--batch", batch, "file with one question per line");
        flags.add(cmd);
    }

    int exec(std::ostream& out, std::ostream& err) {
        ordered_json config;
        config["index"] = index;
        config["kb"] = kb.empty() ? kb_path_for(index).string() : kb;
        config["batch"] = batch;
        config["answer"] = flags.json();
        log_config(err, "query", config);

        std::vector<std::string> qs = questions;
        if (!batch.empty()) {
            auto more = stage("input", [&] { return read_questions(batch); });
            qs.insert(qs.end(), more.begin(), more.end());
        }
        if (qs.empty()) {
            throw_usage("query needs a question or --batch file");
        }
        const auto sys = load_system(index, kb);
        std::unique_ptr<CrossScorer> scorer;
        const auto cfg = flags.resolve(scorer);
        const Retriever retriever(sys.kb, sys.index, sys.embedder);
        const auto preds = stage("answer", [&] { return batch_answer(retriever, qs, cfg); });
        for (size_t i = 0; i < qs.size(); ++i) {
            out << dump_line(prediction_json(qs[i], preds[i], cfg.k)) << '\n';
        }
        return 0;
    }
};

// ---- pipeline ------------------------------------------------------------

struct PipelineCmd {
    std::string passages;
    std::string out;
    std::string backends = "reference";
    std::string filter = "global";
    std::string audit;
    std::string stats;
    std::string source = "generated-learnt";
    size_t top_n = 0;
    size_t max_spans = 8;
    size_t beam = 4;
    size_t take = 1;
    size_t retries = 1;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "pipeline",
            "Generate a filtered QA knowledge base from passages.\n"
            "  passage file: lines {\"passage_id\",\"title\",\"text\",\"ps_score\"}\n"
            "  audit log: lines {\"pair_id\",\"passage_id\",\"question\",\"answer\","
            "\"filter_answer\",\"mode\",\"kept\"}");
        cmd->add_option("--passages,-p", passages, "passage file")->required();
        cmd->add_option("--out,-o", out, "output KB file")->required();
        cmd->add_option("--backends", backends, "reference | subprocess:<command>");
        cmd->add_option("--filter", filter, "none | local | global | oracle");
        cmd->add_option("--audit", audit, "audit log (default <out>.audit.jsonl)");
        cmd->add_option("--stats", stats, "stats file (default <out>.stats.json)");
        cmd->add_option("--source", source,
                        "source tag: generated-learnt | generated-ner | training-set | other");
        cmd->add_option("--top-n", top_n, "passages kept after ranking (0 = all)");
        cmd->add_option("--max-spans", max_spans, "answers per passage");
        cmd->add_option("--beam", beam, "beam width")->check(CLI::PositiveNumber);
        cmd->add_option("--take", take, "questions kept per answer")->check(CLI::PositiveNumber);
        cmd->add_option("--filter-retries", retries, "extra attempts on filter backend errors");
        cmd->add_option("--seed", seed, "seed (the reference backends are deterministic)");
    }

    int exec(std::ostream& out_s, std::ostream& err) {
        PipelineConfig cfg;
        cfg.top_n = top_n;
        cfg.max_spans = max_spans;
        cfg.beam = beam;
        cfg.take = take;
        cfg.filter = filter_mode_from_string(filter);
        cfg.source = qa_source_from_string(source);
        cfg.filter_retries = retries;
        const fs::path audit_path = audit.empty() ? fs::path(out + ".audit.jsonl") : fs::path(audit);
        const fs::path stats_path = stats.empty() ? fs::path(out + ".stats.json") : fs::path(stats);

        ordered_json config;
        config["passages"] = passages;
        config["out"] = out;
        config["audit"] = audit_path.string();
        config["stats"] = stats_path.string();
        config["backends"] = backends;
        config["filter"] = filter;
        config["source"] = source;
        config["top_n"] = top_n;
        config["max_spans"] = max_spans;
        config["beam"] = beam;
        config["take"] = take;
        config["filter_retries"] = retries;
        config["seed"] = seed;
        log_config(err, "pipeline", config);

        auto corpus = stage("input", [&] { return load_passages(passages); });
        BackendSet set;
        if (backends == "reference") {
            set = make_reference_backends(corpus);
        } else if (is_subprocess_spec(backends)) {
            set = stage("backend", [&] { return make_subprocess_backends(subprocess_command(backends)); });
        } else {
            throw_usage("unknown backends '" + backends + "' (reference | subprocess:<command>)");
        }
        const auto result = run_pipeline(corpus, set.view(), cfg);
        stage("save", [&] {
            save_kb(result.kb, out);
            write_file(audit_path, serialize_audit(result.audit));
            write_file(stats_path, serialize_stats(result.stats));
        });
        out_s << serialize_stats(result.stats);
        return 0;
    }
};

// ---- eval ----------------------------------------------------------------

struct Prediction {
    std::string answer;
    std::optional<double> confidence;
};

std::vector<Prediction> load_predictions(const fs::path& path) {
    std::vector<Prediction> out;
    for_each_jsonl(path, [&](size_t line, const nlohmann::json& j) {
        try {
            Prediction p;
            p.answer = j.at("answer").get<std::string>();
            if (j.contains("confidence") && j["confidence"].is_number()) {
                p.confidence = j["confidence"].get<double>();
            }
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw_domain(path.string() + ":" + std::to_string(line) + ": " + e.what(),
                         ErrorCode::malformed);
        }
    });
    return out;
}

struct EvalCmd {
    std::string dataset;
    std::string preds;
    std::string answer_with;
    std::string kb;
    std::string splits;
    std::string paraphrases;
    std::vector<std::string> coverage;
    bool risk = false;
    std::string scored;
    std::string sweep;
    std::uint64_t model_params = 0;
    double bytes_per_param = 2.0;
    bool allow_duplicates = false;
    AnswerFlags flags;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "eval",
            "Evaluate answers against a dataset; tables are tab-separated.\n"
            "  dataset: lines {\"question\",\"answers\":[..]}\n"
            "  predictions: lines {\"answer\",\"confidence\"?} (query output works)\n"
            "  paraphrases: lines {\"test_id\",\"train_id\"} (0-based item positions)\n"
            "  scored predictions: lines {\"question_id\",\"confidence\",\"correct\",\"latency_s\"}");
        cmd->add_option("--dataset,-d", dataset, "dataset file")->required();
        cmd->add_option("--preds", preds, "prediction file aligned with the dataset");
        cmd->add_option("--answer-with", answer_with, "answer the dataset with this index");
        cmd->add_option("--kb", kb, "KB for --answer-with (default <index>.kb.jsonl)");
        cmd->add_option("--splits", splits, "training dataset for overlap splits");
        cmd->add_option("--paraphrases", paraphrases, "human paraphrase links for --splits");
        cmd->add_option("--coverage", coverage, "KB files for answer coverage");
        cmd->add_flag("--risk-coverage", risk, "emit the risk-coverage table");
        cmd->add_option("--scored", scored, "scored predictions for --risk-coverage");
        cmd->add_option("--sweep", sweep, "comma-separated index budgets (needs --answer-with)");
        cmd->add_option("--model-params", model_params, "model parameters for size accounting");
        cmd->add_option("--bytes-per-param", bytes_per_param, "bytes per model parameter");
        cmd->add_flag("--allow-duplicates", allow_duplicates,
                      "keep repeated dataset questions (flagged) instead of failing");
        flags.add(cmd);
    }

    int exec(std::ostream& out, std::ostream& err) {
        ordered_json config;
        config["dataset"] = dataset;
        config["preds"] = preds;
        config["answer_with"] = answer_with;
        config["kb"] = kb;
        config["splits"] = splits;
        config["paraphrases"] = paraphrases;
        config["coverage"] = coverage;
        config["risk_coverage"] = risk;
        config["scored"] = scored;
        config["sweep"] = sweep;
        config["model_params"] = model_params;
        config["bytes_per_param"] = bytes_per_param;
        config["answer"] = flags.json();
        log_config(err, "eval", config);

        if (!preds.empty() && !answer_with.empty()) {
            throw_usage("--preds and --answer-with are mutually exclusive");
        }
        if (!sweep.empty() && answer_with.empty()) {
            throw_usage("--sweep needs --answer-with");
        }
        if (!paraphrases.empty() && splits.empty()) {
            throw_usage("--paraphrases needs --splits");
        }
        const auto policy = allow_duplicates ? DuplicatePolicy::flag : DuplicatePolicy::reject;
        const auto ds = stage("dataset", [&] { return load_dataset(dataset, policy); });
        if (!ds.duplicates.empty()) {
            err << "paq eval: warning: " << ds.duplicates.size() << " repeated questions\n";
        }

        std::vector<Prediction> predictions;
        std::optional<Loaded> sys;
        std::unique_ptr<CrossScorer> scorer;
        AnswerConfig answer_cfg;
        if (!preds.empty()) {
            predictions = stage("preds", [&] { return load_predictions(preds); });
        } else if (!answer_with.empty()) {
            sys = load_system(answer_with, kb);
            answer_cfg = flags.resolve(scorer);
            std::vector<std::string> qs;
            for (const auto& item : ds.items) {
                qs.push_back(item.question);
            }
            const Retriever retriever(sys->kb, sys->index, sys->embedder);
            const auto answers = stage("answer", [&] { return batch_answer(retriever, qs, answer_cfg); });
            for (const auto& a : answers) {
                predictions.push_back({a.answer, a.confidence});
            }
        }

        std::vector<bool> correct;
        bool printed = false;
        const auto section = [&] {
            if (printed) out << '\n';
            printed = true;
        };
        if (!preds.empty() || !answer_with.empty()) {
            std::vector<std::string> answers;
            for (const auto& p : predictions) {
                answers.push_back(p.answer);
            }
            correct = stage("em", [&] { return em_per_item(answers, ds); });
            section();
            out << "metric\tvalue\n";
            out << "questions\t" << ds.size() << '\n';
            out << "em\t" << tsv_number(evaluate_em(answers, ds)) << '\n';
        }

        for (const auto& kb_file : coverage) {
            const auto cover_kb = stage("kb", [&] { return load_kb(kb_file); });
            section();
            out << "kb\tcoverage\n" << kb_file << '\t' << tsv_number(answer_coverage(cover_kb, ds))
                << '\n';
        }

        if (!splits.empty()) {
            const auto train = stage("splits", [&] { return load_dataset(splits, DuplicatePolicy::flag); });
            std::vector<ParaphraseLink> links;
            if (!paraphrases.empty()) {
                links = stage("splits", [&] { return load_paraphrases(paraphrases); });
            }
            const auto labels = stage("splits", [&] { return overlap_splits(train, ds, links); });
            section();
            out << "# q-overlap = normalized exact question match";
            out << (links.empty() ? "" : " or listed paraphrase") << '\n';
            if (correct.empty()) {
                out << "split\tcount\n";
                size_t counts[3] = {0, 0, 0};
                for (auto l : labels) {
                    ++counts[static_cast<size_t>(l)];
                }
                for (size_t s = 0; s < 3; ++s) {
                    out << to_string(static_cast<OverlapLabel>(s)) << '\t' << counts[s] << '\n';
                }
            } else {
                out << "split\tcount\tem\n";
                for (const auto& row : split_em(labels, correct)) {
                    out << to_string(row.label) << '\t' << row.count << '\t' << tsv_number(row.em)
                        << '\n';
                }
            }
        }

        if (risk) {
            std::vector<ScoredPrediction> sp;
            if (!scored.empty()) {
                sp = stage("scored", [&] { return load_scored_predictions(scored); });
            } else {
                if (correct.empty()) {
                    throw_usage("--risk-coverage needs --scored, --preds or --answer-with");
                }
                for (size_t i = 0; i < predictions.size(); ++i) {
                    if (!predictions[i].confidence) {
                        throw_usage("prediction " + std::to_string(i) +
                                    " has no confidence for --risk-coverage");
                    }
                    sp.push_back({static_cast<std::int64_t>(i), *predictions[i].confidence,
                                  static_cast<bool>(correct[i]), std::nullopt});
                }
            }
            const auto points = stage("risk-coverage", [&] { return risk_coverage(sp); });
            section();
            out << risk_coverage_tsv(points);
        }

        if (!sweep.empty()) {
            const auto budgets = parse_budgets(sweep);
            SweepConfig sc;
            sc.embedder = sys->embedder_spec;
            sc.index = sys->index_spec;
            sc.answer = answer_cfg;
            sc.model_params = model_params;
            sc.bytes_per_param = bytes_per_param;
            const auto rows = stage("sweep", [&] { return budget_sweep(*sys->kb, ds, budgets, sc); });
            section();
            out << sweep_tsv(rows);
        }
        if (!printed) {
            throw_usage("nothing to report: give --preds, --answer-with, --coverage, --splits or "
                        "--risk-coverage");
        }
        return 0;
    }
};

// ---- bench ---------------------------------------------------------------

struct BenchCmd {
    std::string index;
    std::string kb;
    std::string queries;
    size_t synthetic_n = 0;
    size_t dim = 128;
    std::string quantize = "none";
    size_t m = 32;
    size_t ef_construction = 80;
    size_t ef_search = 32;
    size_t query_count = 1000;
    std::uint64_t seed = 0;
    size_t k = 1;
    size_t reps = 3;
    size_t threads = 1;
    size_t batch_size = 1;
    bool compare_flat = false;
    std::string index_cache;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "bench",
            "Measure query throughput; prints one tab-separated row per index.\n"
            "  --queries: one question per line");
        cmd->add_option("--index,-i", index, "index file from build-index");
        cmd->add_option("--kb", kb, "KB file (default <index>.kb.jsonl)");
        cmd->add_option("--queries", queries, "question file");
        cmd->add_option("--synthetic", synthetic_n,
                        "benchmark an HNSW index over this many random unit vectors instead");
        cmd->add_option("--dim", dim, "synthetic vector dimension");
        cmd->add_option("--quantize", quantize, "synthetic index storage: none | int8");
        cmd->add_option("--m", m, "synthetic HNSW out-degree");
        cmd->add_option("--ef-construction", ef_construction, "synthetic HNSW build width");
        cmd->add_option("--ef-search", ef_search, "HNSW search width");
        cmd->add_option("--query-count", query_count, "synthetic queries")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--seed", seed, "synthetic data and build seed");
        cmd->add_option("--k", k, "results per query")->check(CLI::PositiveNumber);
        cmd->add_option("--reps", reps, "timed repetitions")->check(CLI::PositiveNumber);
        cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        cmd->add_option("--batch-size", batch_size, "questions handed out per batch")
            ->check(CLI::PositiveNumber);
        cmd->add_flag("--compare-flat", compare_flat, "also time a flat index over the same rows");
        cmd->add_option("--index-cache", index_cache,
                        "synthetic index file: reused when it matches the data, else written");
    }

    // The cached graph is only trusted if it was built from exactly these rows
    // with these parameters.
    std::unique_ptr<HnswIndex> load_cached(const Matrix& data, const HnswParams& params,
                                           QuantMode quant, std::ostream& err) {
        if (index_cache.empty() || !std::filesystem::exists(index_cache)) {
            return nullptr;
        }
        auto loaded = load_index(index_cache);
        auto* h = dynamic_cast<HnswIndex*>(loaded.get());
        std::string why;
        if (!h) {
            why = "not an HNSW index";
        } else if (h->size() != data.rows() || h->dim() != data.dim()) {
            why = "shape differs";
        } else if (h->params().m != params.m || h->params().ef_construction != params.ef_construction ||
                   h->params().seed != params.seed) {
            why = "build parameters differ";
        } else if (!(h->store() == VectorStore::quantize(data, quant))) {
            why = "stored vectors differ";
        }
        if (!why.empty()) {
            err << "paq bench: ignoring index cache " << index_cache << ": " << why << '\n';
            return nullptr;
        }
        loaded.release();
        return std::unique_ptr<HnswIndex>(h);
    }

    void print_row(std::ostream& out, std::ostream& err, const BenchReport& r) {
        for (size_t i = 0; i < r.rep_seconds.size(); ++i) {
            err << "paq bench: " << r.index_type << " rep " << (i + 1) << ": "
                << r.rep_seconds[i] << " s\n";
        }
        out << r.index_type << '\t' << r.questions << '\t' << r.repetitions << '\t' << r.threads
            << '\t' << r.batch_size << '\t' << k << '\t' << tsv_number(r.questions_per_second)
            << '\t' << tsv_number(r.mean_seconds) << '\t' << tsv_number(r.p50_ms) << '\t'
            << tsv_number(r.p99_ms) << '\n';
    }

    int exec(std::ostream& out, std::ostream& err) {
        ordered_json config;
        config["index"] = index;
        config["kb"] = kb;
        config["queries"] = queries;
        config["synthetic"] = synthetic_n;
        if (synthetic_n > 0) {
            config["dim"] = dim;
            config["quantize"] = quantize;
            config["m"] = m;
            config["ef_construction"] = ef_construction;
            config["query_count"] = query_count;
            config["seed"] = seed;
        }
        config["ef_search"] = ef_search;
        config["k"] = k;
        config["reps"] = reps;
        config["threads"] = threads;
        config["batch_size"] = batch_size;
        config["compare_flat"] = compare_flat;
        config["index_cache"] = index_cache;
        log_config(err, "bench", config);

        const char* header =
            "index_type\tquestions\trepetitions\tthreads\tbatch_size\tk\tqps\tmean_s\tp50_ms\tp99_ms\n";
        if (synthetic_n > 0) {
            if (!index.empty()) {
                throw_usage("--synthetic and --index are mutually exclusive");
            }
            const auto quant = parse_quant(quantize);
            HnswParams params{m, ef_construction, ef_search, seed};
            validate_params(params);
            auto t0 = Clock::now();
            const Matrix data = synthetic::unit_vectors(synthetic_n, dim, seed);
            const Matrix qs = synthetic::unit_vectors(query_count, dim, seed + 1);
            std::vector<std::int64_t> ids(synthetic_n);
            for (size_t i = 0; i < synthetic_n; ++i) {
                ids[i] = static_cast<std::int64_t>(i);
            }
            err << "paq bench: generated data in " << seconds_since(t0) << " s\n";
            t0 = Clock::now();
            auto cached = stage("index", [&] { return load_cached(data, params, quant, err); });
            if (cached) {
                err << "paq bench: reused " << index_cache << '\n';
            } else {
                cached = std::make_unique<HnswIndex>(
                    stage("index", [&] { return build_hnsw(data, ids, params, quant); }));
                err << "paq bench: built hnsw over " << synthetic_n << " vectors in "
                    << seconds_since(t0) << " s\n";
                if (!index_cache.empty()) {
                    stage("output", [&] { save_index(*cached, index_cache); });
                }
            }
            const HnswIndex& hnsw = *cached;
            out << header;
            print_row(out, err,
                      stage("bench", [&] {
                          return vector_bench(hnsw, qs, k, reps, threads, batch_size, ef_search);
                      }));
            if (compare_flat) {
                const FlatIndex flat(hnsw.store(), hnsw.ids());
                print_row(out, err, stage("bench", [&] {
                              return vector_bench(flat, qs, k, reps, threads, batch_size);
                          }));
            }
            return 0;
        }

        if (index.empty() || queries.empty()) {
            throw_usage("bench needs --index and --queries, or --synthetic N");
        }
        const auto questions = stage("input", [&] { return read_questions(queries); });
        if (questions.empty()) {
            throw_usage("query file " + queries + " has no questions");
        }
        const auto sys = load_system(index, kb);
        AnswerConfig cfg;
        cfg.k = k;
        cfg.threads = threads;
        cfg.ef_search = ef_search;
        out << header;
        const Retriever retriever(sys.kb, sys.index, sys.embedder);
        print_row(out, err, stage("bench", [&] {
                      return throughput_bench(retriever, questions, cfg, reps, batch_size);
                  }));
        if (compare_flat) {
            auto flat = std::make_shared<const FlatIndex>(sys.index->store(), sys.index->ids());
            const Retriever flat_retriever(sys.kb, flat, sys.embedder);
            print_row(out, err, stage("bench", [&] {
                          return throughput_bench(flat_retriever, questions, cfg, reps, batch_size);
                      }));
        }
        return 0;
    }
};

// ---- backoff -------------------------------------------------------------

// The slower system: a subprocess speaking "question" -> "answer\tconfidence",
// or a file of {"question","answer"} lines.
class Fallback {
public:
    explicit Fallback(const std::string& spec) {
        if (is_subprocess_spec(spec)) {
            proc_ = std::make_unique<Subprocess>(subprocess_command(spec));
            return;
        }
        for_each_jsonl(spec, [&](size_t line, const nlohmann::json& j) {
            try {
                table_[j.at("question").get<std::string>()] = j.at("answer").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw_domain(spec + ":" + std::to_string(line) + ": " + e.what(),
                             ErrorCode::malformed);
            }
        });
    }

    bool is_file() const { return proc_ == nullptr; }

    AnswerPrediction answer(std::string_view question) {
        ++calls_;
        AnswerPrediction p;
        p.source = AnswerSource::fallback;
        if (proc_) {
            const auto reply = proc_->request(question);
            const auto tab = reply.find('\t');
            p.answer = reply.substr(0, tab);
            if (tab != std::string::npos) {
                try {
                    p.confidence = std::stod(reply.substr(tab + 1));
                } catch (const std::exception&) {
                    throw_domain("fallback confidence '" + reply.substr(tab + 1) +
                                     "' is not a number",
                                 ErrorCode::backend);
                }
            }
            return p;
        }
        const auto it = table_.find(std::string(question));
        if (it == table_.end()) {
            throw_domain("fallback file has no answer for '" + std::string(question) + "'",
                         ErrorCode::not_found);
        }
        p.answer = it->second;
        return p;
    }

    size_t calls() const { return calls_; }

private:
    std::unique_ptr<Subprocess> proc_;
    std::unordered_map<std::string, std::string> table_;
    size_t calls_ = 0;
};

struct BackoffCmd {
    std::string index;
    std::string kb;
    std::string dev;
    std::string test;
    std::string fallback;
    std::string threshold;
    std::string routed;
    double t_fast = 0.0;
    double t_slow = 0.0;
    AnswerFlags flags;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand(
            "backoff",
            "Answer with the fast index, deferring low-confidence questions to a fallback.\n"
            "  dev/test: lines {\"question\",\"answers\":[..]}\n"
            "  --fallback subprocess:<cmd>: question line in, \"answer\\tconfidence\" line out\n"
            "  --fallback <file>: lines {\"question\",\"answer\"}\n"
            "  routed output: lines {\"question_id\",\"question\",\"answer\",\"routed_to\","
            "\"confidence\"}");
        cmd->add_option("--index,-i", index, "fast system index")->required();
        cmd->add_option("--kb", kb, "KB file (default <index>.kb.jsonl)");
        cmd->add_option("--dev", dev, "dev dataset for threshold selection");
        cmd->add_option("--test", test, "test dataset")->required();
        cmd->add_option("--fallback", fallback, "fallback system")->required();
        cmd->add_option("--threshold", threshold, "fixed threshold (number, inf or -inf)");
        cmd->add_option("--routed", routed, "write routed answers here");
        cmd->add_option("--t-fast", t_fast, "fast seconds per question (default: measured)");
        cmd->add_option("--t-slow", t_slow, "fallback seconds per question (default: measured)");
        flags.add(cmd);
    }

    int exec(std::ostream& out, std::ostream& err) {
        ordered_json config;
        config["index"] = index;
        config["kb"] = kb;
        config["dev"] = dev;
        config["test"] = test;
        config["fallback"] = fallback;
        config["threshold"] = threshold.empty() ? ordered_json(nullptr) : ordered_json(threshold);
        config["routed"] = routed;
        config["t_fast"] = t_fast;
        config["t_slow"] = t_slow;
        config["answer"] = flags.json();
        log_config(err, "backoff", config);

        if (threshold.empty() && dev.empty()) {
            throw_usage("backoff needs --dev to select a threshold, or --threshold");
        }
        if (t_fast < 0.0 || t_slow < 0.0) {
            throw_usage("--t-fast and --t-slow must be positive");
        }
        const auto test_ds = stage("dataset", [&] { return load_dataset(test, DuplicatePolicy::flag); });
        const auto sys = load_system(index, kb);
        std::unique_ptr<CrossScorer> scorer;
        const auto cfg = flags.resolve(scorer);
        const Retriever retriever(sys.kb, sys.index, sys.embedder);
        Fallback slow = stage("fallback", [&] { return Fallback(fallback); });

        double cut = 0.0;
        double dev_slow_seconds = 0.0;
        size_t dev_slow_calls = 0;
        if (!threshold.empty()) {
            cut = parse_threshold(threshold);
        } else {
            const auto dev_ds = stage("dataset", [&] { return load_dataset(dev, DuplicatePolicy::flag); });
            std::vector<ScoredPrediction> fast_dev;
            std::vector<bool> slow_dev;
            for (size_t i = 0; i < dev_ds.size(); ++i) {
                const auto& item = dev_ds.items[i];
                const auto f = stage("answer", [&] { return answer(retriever, item.question, cfg); });
                fast_dev.push_back({static_cast<std::int64_t>(i), f.confidence,
                                    exact_match(f.answer, item.answers), std::nullopt});
                const auto t0 = Clock::now();
                const auto s = stage("fallback", [&] { return slow.answer(item.question); });
                dev_slow_seconds += seconds_since(t0);
                ++dev_slow_calls;
                slow_dev.push_back(exact_match(s.answer, item.answers));
            }
            cut = select_backoff_threshold(fast_dev, slow_dev);
        }
        err << "paq backoff: threshold " << cut << '\n';

        const size_t calls_before = slow.calls();
        double fast_seconds = 0.0;
        double slow_seconds = 0.0;
        const AnswerFn fast_fn = [&](std::string_view q) {
            const auto t0 = Clock::now();
            auto p = stage("answer", [&] { return answer(retriever, q, cfg); });
            fast_seconds += seconds_since(t0);
            return p;
        };
        const AnswerFn slow_fn = [&](std::string_view q) {
            const auto t0 = Clock::now();
            auto p = stage("fallback", [&] { return slow.answer(q); });
            slow_seconds += seconds_since(t0);
            return p;
        };

        size_t fast_routed = 0;
        size_t fast_correct = 0;
        size_t combined_correct = 0;
        std::string routed_lines;
        for (size_t i = 0; i < test_ds.size(); ++i) {
            const auto& item = test_ds.items[i];
            AnswerPrediction fast_pred;
            const AnswerFn fast_spy = [&](std::string_view q) {
                fast_pred = fast_fn(q);
                return fast_pred;
            };
            const auto [pred, decision] =
                route(static_cast<std::int64_t>(i), item.question, fast_spy, slow_fn, cut);
            fast_correct += exact_match(fast_pred.answer, item.answers) ? 1 : 0;
            combined_correct += exact_match(pred.answer, item.answers) ? 1 : 0;
            fast_routed += decision.routed_to == Route::fast ? 1 : 0;
            ordered_json j;
            j["question_id"] = decision.question_id;
            j["question"] = item.question;
            j["answer"] = decision.final_answer;
            j["routed_to"] = std::string(to_string(decision.routed_to));
            j["confidence"] = fast_pred.confidence;
            routed_lines += dump_line(j);
            routed_lines += '\n';
        }
        const size_t deferred = slow.calls() - calls_before;
        const double n = static_cast<double>(std::max<size_t>(test_ds.size(), 1));
        const double coverage = static_cast<double>(fast_routed) / n;

        double tf = t_fast > 0.0 ? t_fast : fast_seconds / n;
        double ts = t_slow;
        if (ts <= 0.0) {
            const double total = slow_seconds + dev_slow_seconds;
            const size_t calls = deferred + dev_slow_calls;
            ts = calls > 0 ? total / static_cast<double>(calls) : 0.0;
        }
        tf = std::max(tf, 1e-12);
        ts = std::max(ts, 1e-12);
        const auto speed = combined_speed(coverage, tf, ts);

        if (!routed.empty()) {
            stage("save", [&] { write_file(routed, routed_lines); });
        } else {
            err << routed_lines;
        }
        out << "threshold\tquestions\tcoverage\tdeferred\tfast_em\tcombined_em\tt_fast\tt_slow\t"
               "time_per_q\tspeedup_vs_slow\n";
        out << tsv_number(cut) << '\t' << test_ds.size() << '\t' << tsv_number(coverage) << '\t'
            << deferred << '\t' << tsv_number(100.0 * static_cast<double>(fast_correct) / n) << '\t'
            << tsv_number(100.0 * static_cast<double>(combined_correct) / n) << '\t'
            << tsv_number(tf) << '\t' << tsv_number(ts) << '\t' << tsv_number(speed.time_per_q)
            << '\t' << tsv_number(speed.speedup_vs_slow) << '\n';
        return 0;
    }
};

int exit_code(const Error& e) {
    return e.kind() == ErrorKind::domain ? 1 : 2;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"paq: question-answer pair knowledge bases, indexes and evaluation"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    BuildIndexCmd build;
    QueryCmd query;
    PipelineCmd pipeline;
    EvalCmd eval;
    BenchCmd bench;
    BackoffCmd backoff;
    build.add(app);
    query.add(app);
    pipeline.add(app);
    eval.add(app);
    bench.add(app);
    backoff.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        if (name == "build-index") return build.exec(out, err);
        if (name == "query") return query.exec(out, err);
        if (name == "pipeline") return pipeline.exec(out, err);
        if (name == "eval") return eval.exec(out, err);
        if (name == "bench") return bench.exec(out, err);
        if (name == "backoff") return backoff.exec(out, err);
    } catch (const Error& e) {
        err << "paq " << name << ": error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        err << "paq " << name << ": error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace paq::cli
