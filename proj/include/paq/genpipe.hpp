#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paq/kb.hpp"

namespace paq {

inline constexpr size_t kMaxSpanTokens = 30;

// A candidate answer inside a passage: text == passage.text[start, end).
struct AnswerSpan {
    std::int64_t passage_id = 0;
    size_t start = 0;
    size_t end = 0;
    std::string text;
    double extraction_score = 0.0;

    bool operator==(const AnswerSpan&) const = default;
};

// Builds a span, enforcing offsets, the slice identity and the 30-token cap.
AnswerSpan make_span(const PassageRecord& passage, size_t start, size_t end, double score);

struct GeneratedQuestion {
    std::string question;
    std::string answer;
    std::int64_t passage_id = 0;
    size_t span_start = 0;
    size_t span_end = 0;
    double gen_score = 0.0;
    size_t beam_rank = 1;
};

enum class FilterMode { none, local, global, oracle };
std::string_view to_string(FilterMode mode);
FilterMode filter_mode_from_string(std::string_view name);

struct FilterVerdict {
    bool kept = false;
    std::string filter_answer;
    FilterMode mode = FilterMode::local;
};

struct PipelineStats {
    size_t passages_used = 0;
    size_t extracted_answers = 0;
    size_t generated_questions = 0;
    size_t unique_questions = 0;
    size_t filtered_pairs = 0;
    double ratio = 0.0;
};

// Model interfaces for the four stages.

class PassageScorer {
public:
    virtual ~PassageScorer() = default;
    virtual double score(const PassageRecord& passage) const = 0;
};

class AnswerExtractor {
public:
    virtual ~AnswerExtractor() = default;
    virtual std::vector<AnswerSpan> extract(const PassageRecord& passage) const = 0;
};

struct BeamHypothesis {
    std::string question;
    double score = 0.0;
};

class QuestionGenerator {
public:
    virtual ~QuestionGenerator() = default;
    // Input contract: passage text, answer span offsets and answer text.
    virtual std::vector<BeamHypothesis> generate(std::string_view passage, size_t start,
                                                 size_t end, std::string_view answer,
                                                 size_t beam) const = 0;
    // True when scores are sequence probabilities that may weight pair scores.
    virtual bool scores_are_probabilities() const { return false; }
};

// Answers a question given its source passage (local filtering).
class ContextAnswerer {
public:
    virtual ~ContextAnswerer() = default;
    virtual std::string answer(std::string_view question, std::string_view passage) const = 0;
};

// Answers a question with no passage supplied (global filtering).
class OpenDomainAnswerer {
public:
    virtual ~OpenDomainAnswerer() = default;
    virtual std::string answer(std::string_view question) const = 0;
};

// Reference backends: deterministic rules standing in for the trained models.

// Fraction of capitalized tokens plus log(1 + number of 4-digit year tokens).
class EntityDensityScorer final : public PassageScorer {
public:
    double score(const PassageRecord& passage) const override;
};

// Maximal capitalized runs (minus a sentence-initial stopword), 4-digit years
// and digit sequences; score is the span length in characters.
class RuleExtractor final : public AnswerExtractor {
public:
    std::vector<AnswerSpan> extract(const PassageRecord& passage) const override;
};

// Answer-shape templates: "in what year", "how many", "who or what", followed
// by up to 8 content words adjacent to the span. Beam entries vary the window.
class TemplateGenerator final : public QuestionGenerator {
public:
    std::vector<BeamHypothesis> generate(std::string_view passage, size_t start, size_t end,
                                         std::string_view answer, size_t beam) const override;
};

// Picks the extractable span of the expected shape whose sentence shares the
// most content words with the question, skipping spans already in it.
class RuleReader final : public ContextAnswerer {
public:
    std::string answer(std::string_view question, std::string_view passage) const override;
};

// Retrieves the passage with the largest content-word overlap (ties to the
// lowest passage id) from a closed corpus and reads the answer from it.
class CorpusAnswerer final : public OpenDomainAnswerer {
public:
    explicit CorpusAnswerer(std::vector<PassageRecord> corpus);
    std::string answer(std::string_view question) const override;

private:
    std::vector<PassageRecord> corpus_;
    std::vector<std::vector<std::string>> tokens_;
    RuleReader reader_;
};

// Returns the answer recorded for each known question; "" otherwise.
class LookupAnswerer final : public OpenDomainAnswerer {
public:
    explicit LookupAnswerer(std::span<const GeneratedQuestion> questions);
    std::string answer(std::string_view question) const override;

private:
    std::vector<std::pair<std::string, std::string>> table_;
};

std::unique_ptr<PassageScorer> make_subprocess_scorer(const std::string& command);
std::unique_ptr<AnswerExtractor> make_subprocess_extractor(const std::string& command);
std::unique_ptr<QuestionGenerator> make_subprocess_generator(const std::string& command);
std::unique_ptr<ContextAnswerer> make_subprocess_reader(const std::string& command);
std::unique_ptr<OpenDomainAnswerer> make_subprocess_answerer(const std::string& command);

struct Backends {
    const PassageScorer* scorer = nullptr;
    const AnswerExtractor* extractor = nullptr;
    const QuestionGenerator* generator = nullptr;
    const ContextAnswerer* local = nullptr;
    const OpenDomainAnswerer* global = nullptr;
};

// Owns a full backend set and exposes it as Backends.
struct BackendSet {
    std::unique_ptr<PassageScorer> scorer;
    std::unique_ptr<AnswerExtractor> extractor;
    std::unique_ptr<QuestionGenerator> generator;
    std::unique_ptr<ContextAnswerer> local;
    std::unique_ptr<OpenDomainAnswerer> global;

    Backends view() const {
        return {scorer.get(), extractor.get(), generator.get(), local.get(), global.get()};
    }
};

// Reference rules; the global answerer searches `corpus`.
BackendSet make_reference_backends(std::vector<PassageRecord> corpus);
// Every stage through one subprocess command, with `--stage <name>` appended.
BackendSet make_subprocess_backends(const std::string& command);

// Stages.

// Top `top_n` passages by score, ties by ascending passage_id, with ps_score set.
std::vector<PassageRecord> rank_passages(std::span<const PassageRecord> passages,
                                         const PassageScorer& scorer, size_t top_n);

std::vector<AnswerSpan> extract_answers(const PassageRecord& passage,
                                        const AnswerExtractor& extractor, size_t max_spans = 8);

std::vector<GeneratedQuestion> generate_questions(const PassageRecord& passage,
                                                  const AnswerSpan& span,
                                                  const QuestionGenerator& generator,
                                                  size_t beam = 4, size_t take = 1);

FilterVerdict local_filter(std::string_view question, std::string_view answer,
                           const PassageRecord& passage, const ContextAnswerer& answerer);
FilterVerdict global_filter(std::string_view question, std::string_view answer,
                            const OpenDomainAnswerer& answerer);

struct PipelineConfig {
    size_t top_n = 0;  // 0 = all passages
    size_t max_spans = 8;
    size_t beam = 4;
    size_t take = 1;
    FilterMode filter = FilterMode::global;
    QaSource source = QaSource::generated_learnt;
    // Extra attempts when a filtering backend fails before the run aborts.
    size_t filter_retries = 1;
};

struct AuditRecord {
    std::int64_t pair_id = 0;
    std::int64_t passage_id = 0;
    std::string question;
    std::string answer;
    std::string filter_answer;
    FilterMode mode = FilterMode::global;
    bool kept = false;
};

struct PipelineResult {
    KnowledgeBase kb;
    PipelineStats stats;
    std::vector<AuditRecord> audit;
};

// rank -> extract -> generate -> dedup -> filter. Pair ids are positions in the
// deduplicated list, so runs with different filters share ids.
PipelineResult run_pipeline(std::span<const PassageRecord> passages, const Backends& backends,
                            const PipelineConfig& config);

std::string serialize_audit(std::span<const AuditRecord> audit);
std::vector<AuditRecord> parse_audit(std::string_view text);
std::string serialize_stats(const PipelineStats& stats);

}  // namespace paq
