#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paq/embed.hpp"
#include "paq/index.hpp"
#include "paq/kb.hpp"

namespace paq {

class CrossScorer;

struct RetrievalResult {
    std::int64_t qa_id = 0;
    float retriever_score = 0.0f;
    size_t rank = 0;  // 1-based
};

enum class AnswerSource { retriever, reranker, fallback };
std::string_view to_string(AnswerSource source);

struct Match {
    QAPair pair;
    double score = 0.0;
};

struct AnswerPrediction {
    std::string answer;
    double confidence = 0.0;
    // Matched pairs shown for interpretability, best first.
    std::vector<Match> matches;
    AnswerSource source = AnswerSource::retriever;
};

// Question in, nearest stored QA-pairs out. Stored questions and incoming
// questions go through the same embedder.
class Retriever {
public:
    Retriever(std::shared_ptr<const KnowledgeBase> kb, std::shared_ptr<const VectorIndex> index,
              std::shared_ptr<const Embedder> embedder);

    // For HNSW indexes the search width is raised to k when k exceeds it.
    std::vector<RetrievalResult> retrieve(std::string_view question, size_t k,
                                          std::optional<size_t> ef_search = std::nullopt) const;

    const KnowledgeBase& kb() const noexcept { return *kb_; }
    const VectorIndex& index() const noexcept { return *index_; }
    const Embedder& embedder() const noexcept { return *embedder_; }

private:
    std::shared_ptr<const KnowledgeBase> kb_;
    std::shared_ptr<const VectorIndex> index_;
    std::shared_ptr<const Embedder> embedder_;
};

enum class ConfidenceFrom { automatic, retriever, reranker };

struct AnswerConfig {
    // Matches reported per prediction.
    size_t k = 1;
    const CrossScorer* reranker = nullptr;
    // Candidates retrieved and rescored when a reranker is set.
    size_t rerank_candidates = 50;
    // automatic = reranker score when reranking, else retriever score.
    ConfidenceFrom confidence = ConfidenceFrom::automatic;
    std::optional<size_t> ef_search;
    size_t threads = 1;
};

AnswerPrediction answer(const Retriever& retriever, std::string_view question,
                        const AnswerConfig& config);

// Same results as calling answer() in order. The first failing question is
// reported by its position.
std::vector<AnswerPrediction> batch_answer(const Retriever& retriever,
                                           std::span<const std::string> questions,
                                           const AnswerConfig& config);

struct BenchReport {
    std::string index_type;
    size_t questions = 0;
    size_t repetitions = 0;
    size_t threads = 1;
    size_t batch_size = 1;
    double questions_per_second = 0.0;  // mean over repetitions
    double mean_seconds = 0.0;
    double p50_ms = 0.0;
    double p99_ms = 0.0;
    std::vector<double> rep_seconds;
};

BenchReport throughput_bench(const Retriever& retriever, std::span<const std::string> questions,
                             const AnswerConfig& config, size_t repetitions = 3,
                             size_t batch_size = 1);

// Index-only variant timing raw vector searches.
BenchReport vector_bench(const VectorIndex& index, const Matrix& queries, size_t k,
                         size_t repetitions = 3, size_t threads = 1, size_t batch_size = 1,
                         std::optional<size_t> ef_search = std::nullopt);

std::string_view to_string(IndexKind kind);

}  // namespace paq
