#include "paq/retrieve.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <thread>

#include "paq/error.hpp"
#include "paq/rerank.hpp"

namespace paq {

std::string_view to_string(AnswerSource source) {
    switch (source) {
        case AnswerSource::retriever:
            return "retriever";
        case AnswerSource::reranker:
            return "reranker";
        case AnswerSource::fallback:
            return "fallback";
    }
    return "retriever";
}

std::string_view to_string(IndexKind kind) {
    return kind == IndexKind::flat ? "flat" : "hnsw";
}

Retriever::Retriever(std::shared_ptr<const KnowledgeBase> kb,
                     std::shared_ptr<const VectorIndex> index,
                     std::shared_ptr<const Embedder> embedder)
    : kb_(std::move(kb)), index_(std::move(index)), embedder_(std::move(embedder)) {
    if (!kb_ || !index_ || !embedder_) {
        throw_usage("retriever needs a KB, an index and an embedder");
    }
    if (index_->size() != kb_->size()) {
        throw_domain("index holds " + std::to_string(index_->size()) + " vectors but the KB has " +
                         std::to_string(kb_->size()) + " pairs",
                     ErrorCode::dim_mismatch);
    }
    if (index_->size() > 0 && index_->dim() != embedder_->dim()) {
        throw_domain("index dim " + std::to_string(index_->dim()) + " differs from embedder dim " +
                         std::to_string(embedder_->dim()),
                     ErrorCode::dim_mismatch);
    }
}

std::vector<RetrievalResult> Retriever::retrieve(std::string_view question, size_t k,
                                                 std::optional<size_t> ef_search) const {
    if (k == 0) {
        throw_usage("k must be at least 1");
    }
    const auto query = embedder_->embed(question);
    std::vector<Hit> hits;
    if (const auto* hnsw = dynamic_cast<const HnswIndex*>(index_.get())) {
        const size_t ef = std::max(ef_search.value_or(hnsw->params().ef_search), k);
        hits = hnsw->search(query, k, ef);
    } else {
        hits = index_->search(query, k);
    }
    std::vector<RetrievalResult> out;
    out.reserve(hits.size());
    for (size_t i = 0; i < hits.size(); ++i) {
        if (!kb_->position_of(hits[i].id)) {
            throw_domain("index returned id " + std::to_string(hits[i].id) +
                             " which is not in the KB",
                         ErrorCode::not_found);
        }
        out.push_back({hits[i].id, hits[i].score, i + 1});
    }
    return out;
}

AnswerPrediction answer(const Retriever& retriever, std::string_view question,
                        const AnswerConfig& config) {
    if (retriever.kb().empty()) {
        throw_domain("knowledge base empty", ErrorCode::empty_input);
    }
    const size_t k = std::max<size_t>(1, config.k);
    AnswerPrediction pred;
    if (config.reranker == nullptr) {
        const auto results = retriever.retrieve(question, k, config.ef_search);
        for (const auto& r : results) {
            pred.matches.push_back({retriever.kb().by_id(r.qa_id), r.retriever_score});
        }
        pred.source = AnswerSource::retriever;
        pred.answer = pred.matches.front().pair.answer;
        pred.confidence = pred.matches.front().score;
        return pred;
    }

    const size_t n = std::max(config.rerank_candidates, k);
    const auto results = retriever.retrieve(question, n, config.ef_search);
    std::vector<Candidate> cands;
    cands.reserve(results.size());
    for (const auto& r : results) {
        cands.push_back({retriever.kb().by_id(r.qa_id), r.retriever_score, std::nullopt});
    }
    const auto ranked = rerank(question, std::move(cands), *config.reranker,
                               std::max<size_t>(1, config.rerank_candidates));
    for (size_t i = 0; i < ranked.size() && i < k; ++i) {
        pred.matches.push_back({ranked[i].qa, *ranked[i].rerank_score});
    }
    pred.source = AnswerSource::reranker;
    pred.answer = ranked.front().qa.answer;
    pred.confidence = config.confidence == ConfidenceFrom::retriever
                          ? ranked.front().retriever_score
                          : *ranked.front().rerank_score;
    return pred;
}

namespace {

template <typename Fn>
void parallel_for(size_t n, size_t threads, Fn&& fn) {
    threads = std::max<size_t>(1, std::min(threads, n));
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    for (size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (size_t i = t; i < n; i += threads) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

double percentile_ms(std::vector<double> seconds, double q) {
    if (seconds.empty()) {
        return 0.0;
    }
    std::sort(seconds.begin(), seconds.end());
    const auto idx = static_cast<size_t>(q * static_cast<double>(seconds.size() - 1) + 0.5);
    return seconds[std::min(idx, seconds.size() - 1)] * 1e3;
}

using Clock = std::chrono::steady_clock;

// Runs `one(i)` over n items `reps` times, in batches of batch_size spread over
// threads, and summarizes wall time and per-item latency.
template <typename Fn>
BenchReport run_bench(size_t n, size_t reps, size_t threads, size_t batch_size, Fn&& one) {
    BenchReport report;
    report.questions = n;
    report.repetitions = std::max<size_t>(1, reps);
    report.threads = std::max<size_t>(1, threads);
    report.batch_size = std::max<size_t>(1, batch_size);
    std::vector<double> latencies(n * report.repetitions, 0.0);
    double qps_sum = 0.0;
    for (size_t rep = 0; rep < report.repetitions; ++rep) {
        const auto start = Clock::now();
        for (size_t b = 0; b < n; b += report.batch_size) {
            const size_t e = std::min(n, b + report.batch_size);
            parallel_for(e - b, report.threads, [&](size_t j) {
                const size_t i = b + j;
                const auto t0 = Clock::now();
                one(i);
                latencies[rep * n + i] = std::chrono::duration<double>(Clock::now() - t0).count();
            });
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        report.rep_seconds.push_back(secs);
        qps_sum += secs > 0.0 ? static_cast<double>(n) / secs : 0.0;
    }
    double total = 0.0;
    for (double s : report.rep_seconds) {
        total += s;
    }
    report.mean_seconds = total / static_cast<double>(report.repetitions);
    report.questions_per_second = qps_sum / static_cast<double>(report.repetitions);
    report.p50_ms = percentile_ms(latencies, 0.50);
    report.p99_ms = percentile_ms(latencies, 0.99);
    return report;
}

}  // namespace

std::vector<AnswerPrediction> batch_answer(const Retriever& retriever,
                                           std::span<const std::string> questions,
                                           const AnswerConfig& config) {
    std::vector<AnswerPrediction> out(questions.size());
    std::vector<std::exception_ptr> errors(questions.size());
    parallel_for(questions.size(), config.threads, [&](size_t i) {
        try {
            out[i] = answer(retriever, questions[i], config);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) {
            continue;
        }
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), e.code(), "question " + std::to_string(i) + ": " + e.what());
        } catch (const std::exception& e) {
            throw_domain("question " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

BenchReport throughput_bench(const Retriever& retriever, std::span<const std::string> questions,
                             const AnswerConfig& config, size_t repetitions, size_t batch_size) {
    AnswerConfig single = config;
    single.threads = 1;
    auto report = run_bench(questions.size(), repetitions, config.threads, batch_size,
                            [&](size_t i) { (void)answer(retriever, questions[i], single); });
    report.index_type = std::string(to_string(retriever.index().kind()));
    return report;
}

BenchReport vector_bench(const VectorIndex& index, const Matrix& queries, size_t k,
                         size_t repetitions, size_t threads, size_t batch_size,
                         std::optional<size_t> ef_search) {
    const auto* hnsw = dynamic_cast<const HnswIndex*>(&index);
    auto report = run_bench(queries.rows(), repetitions, threads, batch_size, [&](size_t i) {
        if (hnsw) {
            (void)hnsw->search(queries.row(i), k,
                               std::max(ef_search.value_or(hnsw->params().ef_search), k));
        } else {
            (void)index.search(queries.row(i), k);
        }
    });
    report.index_type = std::string(to_string(index.kind()));
    return report;
}

}  // namespace paq
