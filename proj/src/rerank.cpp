#include "paq/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "paq/error.hpp"
#include "paq/jsonl.hpp"
#include "paq/subprocess.hpp"
#include "paq/text.hpp"

namespace paq {

namespace {

std::string escape_separator(std::string_view text) {
    std::string out;
    size_t pos = 0;
    while (true) {
        const size_t hit = text.find(kSeparator, pos);
        if (hit == std::string_view::npos) {
            out.append(text.substr(pos));
            return out;
        }
        out.append(text.substr(pos, hit - pos));
        out.append(kEscapedSeparator);
        pos = hit + kSeparator.size();
    }
}

}  // namespace

std::string featurize(std::string_view input_q, std::string_view cand_q, std::string_view cand_a) {
    std::string out = escape_separator(input_q);
    out.append(" ").append(kSeparator).append(" ");
    out.append(escape_separator(cand_q));
    out.append(" ").append(kSeparator).append(" ");
    out.append(escape_separator(cand_a));
    return out;
}

double lexical_cross_score(std::string_view input_q, std::string_view cand_q,
                           std::string_view cand_a) {
    const auto in_tokens = split_whitespace(normalize_answer(input_q));
    const auto cand_tokens = split_whitespace(normalize_answer(cand_q));
    double f1 = 0.0;
    if (!in_tokens.empty() && !cand_tokens.empty()) {
        std::unordered_map<std::string, int> counts;
        for (const auto& t : cand_tokens) {
            ++counts[t];
        }
        size_t common = 0;
        for (const auto& t : in_tokens) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++common;
            }
        }
        if (common > 0) {
            const double precision = static_cast<double>(common) / cand_tokens.size();
            const double recall = static_cast<double>(common) / in_tokens.size();
            f1 = 2.0 * precision * recall / (precision + recall);
        }
    }
    const auto answer_tokens = split_whitespace(normalize_answer(cand_a));
    const bool bonus = std::any_of(in_tokens.begin(), in_tokens.end(), [&](const std::string& t) {
        return std::find(answer_tokens.begin(), answer_tokens.end(), t) != answer_tokens.end();
    });
    return std::clamp(f1 + (bonus ? 0.05 : 0.0), 0.0, 1.0);
}

SubprocessScorer::SubprocessScorer(const std::string& command)
    : proc_(std::make_unique<Subprocess>(command)) {}

SubprocessScorer::~SubprocessScorer() = default;

double SubprocessScorer::score(std::string_view input_q, std::string_view cand_q,
                               std::string_view cand_a) const {
    std::string line = featurize(input_q, cand_q, cand_a);
    std::replace(line.begin(), line.end(), '\n', ' ');
    std::string reply;
    {
        std::lock_guard lock(mu_);
        reply = proc_->request(line);
    }
    const std::string t = trim(reply);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
        throw Error(ErrorKind::domain, ErrorCode::backend,
                    "scorer subprocess returned '" + reply + "', expected a number");
    }
    return v;
}

std::vector<Candidate> rerank(std::string_view input_q, std::vector<Candidate> candidates,
                              const CrossScorer& scorer, size_t top_n) {
    if (candidates.empty()) {
        throw_usage("rerank needs at least one candidate", ErrorCode::empty_input);
    }
    candidates.resize(std::min(top_n, candidates.size()));
    for (auto& c : candidates) {
        c.rerank_score = scorer.score(input_q, c.qa.question, c.qa.answer);
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (*a.rerank_score != *b.rerank_score) {
            return *a.rerank_score > *b.rerank_score;
        }
        if (a.retriever_score != b.retriever_score) {
            return a.retriever_score > b.retriever_score;
        }
        return a.qa.id < b.qa.id;
    });
    return candidates;
}

namespace {

// Uniform integer in [0, n) by rejection, independent of the standard
// library's distribution implementations.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

}  // namespace

std::vector<RerankExample> build_reranker_training_data(std::span<const TrainingPair> train,
                                                        const Retriever& retriever,
                                                        const RerankDataConfig& config,
                                                        RerankDataStats* stats) {
    if (config.n_candidates == 0) {
        throw_usage("n_candidates must be at least 1");
    }
    RerankDataStats local;
    std::vector<RerankExample> out;
    for (const auto& tp : train) {
        ++local.requested;
        if (tp.answers.empty()) {
            throw_usage("training pair " + std::to_string(tp.id) + " has no answers",
                        ErrorCode::empty_input);
        }
        const auto results = retriever.retrieve(tp.question, config.n_candidates);
        std::optional<QAPair> positive;
        std::vector<const QAPair*> wrong;
        for (const auto& r : results) {
            const QAPair& cand = retriever.kb().by_id(r.qa_id);
            if (exact_match(cand.answer, tp.answers)) {
                if (!positive) {
                    positive = cand;
                }
            } else {
                wrong.push_back(&cand);
            }
        }
        if (!positive) {
            ++local.skipped_no_positive;
            continue;
        }
        RerankExample ex;
        ex.input_question = tp.question;
        ex.positive = *positive;
        std::mt19937_64 rng(config.seed ^ static_cast<std::uint64_t>(tp.id));
        const size_t take = std::min(config.n_negatives, wrong.size());
        for (size_t i = 0; i < take; ++i) {
            const size_t j = i + static_cast<size_t>(uniform_below(rng, wrong.size() - i));
            std::swap(wrong[i], wrong[j]);
            ex.negatives.push_back(*wrong[i]);
        }
        if (take < config.n_negatives) {
            ex.short_negatives = true;
            ++local.short_negatives;
        }
        out.push_back(std::move(ex));
        ++local.built;
    }
    if (stats) {
        *stats = local;
    }
    return out;
}

std::string serialize_examples(std::span<const RerankExample> examples) {
    std::string out;
    for (const auto& ex : examples) {
        ordered_json j;
        j["question"] = ex.input_question;
        j["positive"] = ordered_json::parse(serialize_pair(ex.positive));
        j["negatives"] = ordered_json::array();
        for (const auto& n : ex.negatives) {
            j["negatives"].push_back(ordered_json::parse(serialize_pair(n)));
        }
        out += dump_line(j);
        out.push_back('\n');
    }
    return out;
}

}  // namespace paq
