#include "paq/genpipe.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <unordered_set>

#include "paq/error.hpp"
#include "paq/jsonl.hpp"
#include "paq/subprocess.hpp"
#include "paq/text.hpp"

namespace paq {

std::string_view to_string(FilterMode mode) {
    switch (mode) {
        case FilterMode::none:
            return "none";
        case FilterMode::local:
            return "local";
        case FilterMode::global:
            return "global";
        case FilterMode::oracle:
            return "oracle";
    }
    return "none";
}

FilterMode filter_mode_from_string(std::string_view name) {
    if (name == "none") return FilterMode::none;
    if (name == "local") return FilterMode::local;
    if (name == "global") return FilterMode::global;
    if (name == "oracle") return FilterMode::oracle;
    throw_usage("unknown filter mode '" + std::string(name) + "' (none|local|global|oracle)");
}

std::vector<PassageRecord> rank_passages(std::span<const PassageRecord> passages,
                                         const PassageScorer& scorer, size_t top_n) {
    if (top_n > passages.size()) {
        throw_usage("top_n=" + std::to_string(top_n) + " exceeds the " +
                    std::to_string(passages.size()) + " available passages");
    }
    std::vector<PassageRecord> ranked(passages.begin(), passages.end());
    for (auto& p : ranked) {
        p.ps_score = scorer.score(p);
        if (!std::isfinite(p.ps_score)) {
            throw_domain("passage scorer returned a non-finite score for passage " +
                             std::to_string(p.passage_id),
                         ErrorCode::backend);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const PassageRecord& a, const PassageRecord& b) {
        if (a.ps_score != b.ps_score) {
            return a.ps_score > b.ps_score;
        }
        return a.passage_id < b.passage_id;
    });
    ranked.resize(top_n);
    return ranked;
}

std::vector<AnswerSpan> extract_answers(const PassageRecord& passage,
                                        const AnswerExtractor& extractor, size_t max_spans) {
    auto spans = extractor.extract(passage);
    for (const auto& s : spans) {
        // Re-validate whatever the backend produced.
        if (make_span(passage, s.start, s.end, s.extraction_score) != s) {
            throw_domain("extractor produced an inconsistent span", ErrorCode::backend);
        }
    }
    std::sort(spans.begin(), spans.end(), [](const AnswerSpan& a, const AnswerSpan& b) {
        if (a.extraction_score != b.extraction_score) {
            return a.extraction_score > b.extraction_score;
        }
        if (a.start != b.start) {
            return a.start < b.start;
        }
        return a.end < b.end;
    });
    spans.erase(std::unique(spans.begin(), spans.end(),
                            [](const AnswerSpan& a, const AnswerSpan& b) {
                                return a.start == b.start && a.end == b.end;
                            }),
                spans.end());
    if (spans.size() > max_spans) {
        spans.resize(max_spans);
    }
    return spans;
}

std::vector<GeneratedQuestion> generate_questions(const PassageRecord& passage,
                                                  const AnswerSpan& span,
                                                  const QuestionGenerator& generator, size_t beam,
                                                  size_t take) {
    if (take == 0 || take > beam) {
        throw_usage("take=" + std::to_string(take) + " must be between 1 and beam=" +
                    std::to_string(beam));
    }
    if (span.passage_id != passage.passage_id || span.end > passage.text.size() ||
        passage.text.compare(span.start, span.end - span.start, span.text) != 0) {
        throw_usage("answer span does not belong to passage " + std::to_string(passage.passage_id));
    }
    auto hyps = generator.generate(passage.text, span.start, span.end, span.text, beam);
    if (hyps.size() > beam) {
        hyps.resize(beam);
    }
    std::vector<GeneratedQuestion> out;
    for (size_t i = 0; i < hyps.size() && i < take; ++i) {
        if (split_whitespace(hyps[i].question).empty()) {
            continue;
        }
        GeneratedQuestion g;
        g.question = std::move(hyps[i].question);
        g.answer = span.text;
        g.passage_id = passage.passage_id;
        g.span_start = span.start;
        g.span_end = span.end;
        g.gen_score = hyps[i].score;
        g.beam_rank = i + 1;
        out.push_back(std::move(g));
    }
    return out;
}

FilterVerdict local_filter(std::string_view question, std::string_view answer,
                           const PassageRecord& passage, const ContextAnswerer& answerer) {
    FilterVerdict v;
    v.mode = FilterMode::local;
    v.filter_answer = answerer.answer(question, passage.text);
    v.kept = exact_match(v.filter_answer, answer);
    return v;
}

FilterVerdict global_filter(std::string_view question, std::string_view answer,
                            const OpenDomainAnswerer& answerer) {
    FilterVerdict v;
    v.mode = FilterMode::global;
    v.filter_answer = answerer.answer(question);
    v.kept = exact_match(v.filter_answer, answer);
    return v;
}

namespace {

template <typename Fn>
auto with_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), e.code(), std::string("[") + stage + "] " + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorKind::domain, ErrorCode::backend, std::string("[") + stage + "] " + e.what());
    }
}

template <typename Fn>
FilterVerdict with_retries(size_t retries, Fn&& fn) {
    for (size_t attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const Error& e) {
            if (attempt >= retries || e.kind() == ErrorKind::usage) {
                throw;
            }
        }
    }
}

}  // namespace

PipelineResult run_pipeline(std::span<const PassageRecord> passages, const Backends& backends,
                            const PipelineConfig& config) {
    if (!backends.scorer || !backends.extractor || !backends.generator) {
        throw_usage("pipeline needs scorer, extractor and generator backends");
    }
    if (config.filter == FilterMode::local && !backends.local) {
        throw_usage("local filtering needs a context answerer");
    }
    if (config.filter == FilterMode::global && !backends.global) {
        throw_usage("global filtering needs an open-domain answerer");
    }
    PipelineResult result;
    auto& stats = result.stats;

    const size_t top_n = config.top_n == 0 ? passages.size() : config.top_n;
    const auto ranked = with_stage("rank", [&] {
        return rank_passages(passages, *backends.scorer, top_n);
    });
    stats.passages_used = ranked.size();

    std::vector<GeneratedQuestion> generated;
    std::vector<double> ps_of;  // aligned with generated
    std::vector<const PassageRecord*> source_of;
    for (const auto& passage : ranked) {
        const auto spans = with_stage("extract", [&] {
            return extract_answers(passage, *backends.extractor, config.max_spans);
        });
        stats.extracted_answers += spans.size();
        for (const auto& span : spans) {
            auto qs = with_stage("generate", [&] {
                return generate_questions(passage, span, *backends.generator, config.beam,
                                          config.take);
            });
            for (auto& q : qs) {
                generated.push_back(std::move(q));
                ps_of.push_back(passage.ps_score);
                source_of.push_back(&passage);
            }
        }
    }
    stats.generated_questions = generated.size();

    std::vector<size_t> order(generated.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const auto& x = generated[a];
        const auto& y = generated[b];
        return std::tie(x.passage_id, x.span_start, x.span_end, x.beam_rank) <
               std::tie(y.passage_id, y.span_start, y.span_end, y.beam_rank);
    });
    std::unordered_set<std::string> seen;
    std::vector<size_t> unique;
    for (size_t idx : order) {
        if (seen.insert(normalize_answer(generated[idx].question)).second) {
            unique.push_back(idx);
        }
    }
    stats.unique_questions = unique.size();

    std::unique_ptr<LookupAnswerer> oracle;
    if (config.filter == FilterMode::oracle) {
        std::vector<GeneratedQuestion> uq;
        for (size_t idx : unique) {
            uq.push_back(generated[idx]);
        }
        oracle = std::make_unique<LookupAnswerer>(uq);
    }

    const bool use_probabilities = backends.generator->scores_are_probabilities();
    std::vector<QAPair> kept;
    for (size_t pos = 0; pos < unique.size(); ++pos) {
        const auto& g = generated[unique[pos]];
        bool keep = true;
        if (config.filter != FilterMode::none) {
            const auto verdict = with_stage("filter", [&] {
                return with_retries(config.filter_retries, [&] {
                    switch (config.filter) {
                        case FilterMode::local:
                            return local_filter(g.question, g.answer, *source_of[unique[pos]],
                                                *backends.local);
                        case FilterMode::global:
                            return global_filter(g.question, g.answer, *backends.global);
                        default:
                            return global_filter(g.question, g.answer, *oracle);
                    }
                });
            });
            keep = verdict.kept;
            result.audit.push_back({static_cast<std::int64_t>(pos), g.passage_id, g.question,
                                    g.answer, verdict.filter_answer, verdict.mode, verdict.kept});
        }
        if (!keep) {
            continue;
        }
        QAPair p;
        p.id = static_cast<std::int64_t>(pos);
        p.question = g.question;
        p.answer = g.answer;
        p.score = ps_of[unique[pos]];
        if (use_probabilities && g.gen_score > 0.0 && g.gen_score <= 1.0) {
            p.score *= g.gen_score;
        }
        p.passage_id = g.passage_id;
        p.source = config.source;
        kept.push_back(std::move(p));
    }
    stats.filtered_pairs = kept.size();
    stats.ratio = stats.unique_questions == 0
                      ? 0.0
                      : static_cast<double>(stats.filtered_pairs) /
                            static_cast<double>(stats.unique_questions);
    if (!(stats.filtered_pairs <= stats.unique_questions &&
          stats.unique_questions <= stats.generated_questions)) {
        throw_domain("pipeline count chain violated");
    }
    KbMetadata meta;
    meta.name = "paq-pipeline";
    meta.params = {{"top_n", std::to_string(top_n)},
                   {"max_spans", std::to_string(config.max_spans)},
                   {"beam", std::to_string(config.beam)},
                   {"take", std::to_string(config.take)},
                   {"filter", std::string(to_string(config.filter))}};
    result.kb = KnowledgeBase(std::move(kept), std::move(meta));
    return result;
}

std::string serialize_audit(std::span<const AuditRecord> audit) {
    std::string out;
    for (const auto& a : audit) {
        ordered_json j;
        j["pair_id"] = a.pair_id;
        j["passage_id"] = a.passage_id;
        j["question"] = a.question;
        j["answer"] = a.answer;
        j["filter_answer"] = a.filter_answer;
        j["mode"] = std::string(to_string(a.mode));
        j["kept"] = a.kept;
        out += dump_line(j);
        out.push_back('\n');
    }
    return out;
}

std::vector<AuditRecord> parse_audit(std::string_view text) {
    std::vector<AuditRecord> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) {
            continue;
        }
        const auto j = nlohmann::json::parse(line);
        AuditRecord a;
        a.pair_id = j.at("pair_id").get<std::int64_t>();
        a.passage_id = j.at("passage_id").get<std::int64_t>();
        a.question = j.at("question").get<std::string>();
        a.answer = j.at("answer").get<std::string>();
        a.filter_answer = j.at("filter_answer").get<std::string>();
        a.mode = filter_mode_from_string(j.at("mode").get<std::string>());
        a.kept = j.at("kept").get<bool>();
        out.push_back(std::move(a));
    }
    return out;
}

std::string serialize_stats(const PipelineStats& stats) {
    ordered_json j;
    j["passages_used"] = stats.passages_used;
    j["extracted_answers"] = stats.extracted_answers;
    j["generated_questions"] = stats.generated_questions;
    j["unique_questions"] = stats.unique_questions;
    j["filtered_pairs"] = stats.filtered_pairs;
    j["ratio"] = stats.ratio;
    return j.dump(2) + "\n";
}

// Subprocess backends. Each talks a line protocol; see the CLI help text.

namespace {

std::string one_line(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c == '\n' || c == '\r' || c == '\t') {
            c = ' ';
        }
    }
    return out;
}

double parse_number(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
        throw Error(ErrorKind::domain, ErrorCode::backend,
                    what + " returned '" + text + "', expected a number");
    }
    return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        const size_t tab = line.find('\t', pos);
        out.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) {
            return out;
        }
        pos = tab + 1;
    }
}

class ProcScorer final : public PassageScorer {
public:
    explicit ProcScorer(const std::string& cmd) : proc_(cmd) {}
    double score(const PassageRecord& passage) const override {
        std::lock_guard lock(mu_);
        return parse_number(proc_.request(one_line(passage.text)), "passage scorer");
    }

private:
    mutable Subprocess proc_;
    mutable std::mutex mu_;
};

class ProcExtractor final : public AnswerExtractor {
public:
    explicit ProcExtractor(const std::string& cmd) : proc_(cmd) {}
    std::vector<AnswerSpan> extract(const PassageRecord& passage) const override {
        std::lock_guard lock(mu_);
        proc_.write_line(one_line(passage.text));
        std::vector<AnswerSpan> spans;
        for (std::string line = proc_.read_line(); !trim(line).empty(); line = proc_.read_line()) {
            const auto f = split_tabs(line);
            if (f.size() != 3) {
                throw Error(ErrorKind::domain, ErrorCode::backend,
                            "extractor line '" + line + "' is not start<TAB>end<TAB>score");
            }
            const double start = parse_number(f[0], "extractor");
            const double end = parse_number(f[1], "extractor");
            if (start < 0 || end < 0) {
                throw Error(ErrorKind::domain, ErrorCode::backend, "negative span offset");
            }
            spans.push_back(make_span(passage, static_cast<size_t>(start),
                                      static_cast<size_t>(end), parse_number(f[2], "extractor")));
        }
        return spans;
    }

private:
    mutable Subprocess proc_;
    mutable std::mutex mu_;
};

class ProcGenerator final : public QuestionGenerator {
public:
    explicit ProcGenerator(const std::string& cmd) : proc_(cmd) {}
    std::vector<BeamHypothesis> generate(std::string_view passage, size_t start, size_t end,
                                         std::string_view answer, size_t beam) const override {
        std::lock_guard lock(mu_);
        proc_.write_line(one_line(answer) + "\t" + std::to_string(start) + "\t" +
                         std::to_string(end) + "\t" + one_line(passage));
        std::vector<BeamHypothesis> out;
        for (std::string line = proc_.read_line(); !trim(line).empty(); line = proc_.read_line()) {
            const auto f = split_tabs(line);
            if (f.size() != 2) {
                throw Error(ErrorKind::domain, ErrorCode::backend,
                            "generator line '" + line + "' is not question<TAB>score");
            }
            if (out.size() < beam) {
                out.push_back({f[0], parse_number(f[1], "generator")});
            }
        }
        return out;
    }
    bool scores_are_probabilities() const override { return true; }

private:
    mutable Subprocess proc_;
    mutable std::mutex mu_;
};

class ProcReader final : public ContextAnswerer {
public:
    explicit ProcReader(const std::string& cmd) : proc_(cmd) {}
    std::string answer(std::string_view question, std::string_view passage) const override {
        std::lock_guard lock(mu_);
        return trim(proc_.request(one_line(question) + "\t" + one_line(passage)));
    }

private:
    mutable Subprocess proc_;
    mutable std::mutex mu_;
};

class ProcAnswerer final : public OpenDomainAnswerer {
public:
    explicit ProcAnswerer(const std::string& cmd) : proc_(cmd) {}
    std::string answer(std::string_view question) const override {
        std::lock_guard lock(mu_);
        return trim(proc_.request(one_line(question)));
    }

private:
    mutable Subprocess proc_;
    mutable std::mutex mu_;
};

}  // namespace

std::unique_ptr<PassageScorer> make_subprocess_scorer(const std::string& command) {
    return std::make_unique<ProcScorer>(command);
}
std::unique_ptr<AnswerExtractor> make_subprocess_extractor(const std::string& command) {
    return std::make_unique<ProcExtractor>(command);
}
std::unique_ptr<QuestionGenerator> make_subprocess_generator(const std::string& command) {
    return std::make_unique<ProcGenerator>(command);
}
std::unique_ptr<ContextAnswerer> make_subprocess_reader(const std::string& command) {
    return std::make_unique<ProcReader>(command);
}
std::unique_ptr<OpenDomainAnswerer> make_subprocess_answerer(const std::string& command) {
    return std::make_unique<ProcAnswerer>(command);
}

BackendSet make_subprocess_backends(const std::string& command) {
    BackendSet set;
    set.scorer = make_subprocess_scorer(command + " --stage score");
    set.extractor = make_subprocess_extractor(command + " --stage extract");
    set.generator = make_subprocess_generator(command + " --stage generate");
    set.local = make_subprocess_reader(command + " --stage local");
    set.global = make_subprocess_answerer(command + " --stage global");
    return set;
}

}  // namespace paq
