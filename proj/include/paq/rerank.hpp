#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paq/kb.hpp"
#include "paq/retrieve.hpp"

namespace paq {

class Subprocess;

inline constexpr std::string_view kSeparator = "[SEP]";
inline constexpr std::string_view kEscapedSeparator = "[SEP_]";

// "input_q [SEP] cand_q [SEP] cand_a"; literal separators inside the inputs
// are escaped to "[SEP_]" first.
std::string featurize(std::string_view input_q, std::string_view cand_q, std::string_view cand_a);

// Token F1 between the normalized questions plus a 0.05 bonus when any input
// token occurs in the candidate answer, clamped to [0, 1].
double lexical_cross_score(std::string_view input_q, std::string_view cand_q,
                           std::string_view cand_a);

class CrossScorer {
public:
    virtual ~CrossScorer() = default;
    virtual double score(std::string_view input_q, std::string_view cand_q,
                         std::string_view cand_a) const = 0;
};

class LexicalScorer final : public CrossScorer {
public:
    double score(std::string_view input_q, std::string_view cand_q,
                 std::string_view cand_a) const override {
        return lexical_cross_score(input_q, cand_q, cand_a);
    }
};

// Sends one featurized line per candidate, reads back one decimal score.
class SubprocessScorer final : public CrossScorer {
public:
    explicit SubprocessScorer(const std::string& command);
    ~SubprocessScorer() override;
    double score(std::string_view input_q, std::string_view cand_q,
                 std::string_view cand_a) const override;

private:
    std::unique_ptr<Subprocess> proc_;
    mutable std::mutex mu_;
};

struct Candidate {
    QAPair qa;
    double retriever_score = 0.0;
    std::optional<double> rerank_score;
};

// Rescores the first min(top_n, size) candidates and sorts them by rerank
// score, then retriever score, then ascending id. The unscored tail is dropped.
std::vector<Candidate> rerank(std::string_view input_q, std::vector<Candidate> candidates,
                              const CrossScorer& scorer, size_t top_n = 50);

struct RerankExample {
    std::string input_question;
    QAPair positive;
    std::vector<QAPair> negatives;
    // Fewer non-matching candidates existed than negatives requested.
    bool short_negatives = false;
};

struct TrainingPair {
    std::int64_t id = 0;
    std::string question;
    std::vector<std::string> answers;
};

struct RerankDataStats {
    size_t requested = 0;
    size_t built = 0;
    size_t skipped_no_positive = 0;
    size_t short_negatives = 0;
};

struct RerankDataConfig {
    size_t n_candidates = 100;
    size_t n_negatives = 10;
    std::uint64_t seed = 0;
};

// For each training pair: retrieve n_candidates, take the best-ranked
// candidate whose answer matches as the positive, and sample negatives from
// the non-matching candidates with an RNG seeded by (seed ^ pair id).
std::vector<RerankExample> build_reranker_training_data(std::span<const TrainingPair> train,
                                                        const Retriever& retriever,
                                                        const RerankDataConfig& config,
                                                        RerankDataStats* stats = nullptr);

std::string serialize_examples(std::span<const RerankExample> examples);

}  // namespace paq
