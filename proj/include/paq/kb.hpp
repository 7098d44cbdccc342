#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace paq {

enum class QaSource { generated_learnt, generated_ner, training_set, other };

std::string_view to_string(QaSource source);
QaSource qa_source_from_string(std::string_view name);

struct QAPair {
    std::int64_t id = 0;
    std::string question;
    std::string answer;
    // Likelihood-of-being-asked; larger is better. Not required to be in [0, 1].
    double score = 0.0;
    std::optional<std::int64_t> passage_id;
    QaSource source = QaSource::other;

    bool operator==(const QAPair&) const = default;
};

struct PassageRecord {
    std::int64_t passage_id = 0;
    std::string title;
    std::string text;
    double ps_score = 0.0;

    bool operator==(const PassageRecord&) const = default;
};

struct KbMetadata {
    std::string name;
    // Free-form key/value parameters describing how the KB was made.
    std::vector<std::pair<std::string, std::string>> params;
};

// Immutable ordered collection of QA-pairs with unique ids.
class KnowledgeBase {
public:
    KnowledgeBase() = default;
    // Validates every pair (non-empty question/answer, unique ids).
    explicit KnowledgeBase(std::vector<QAPair> pairs, KbMetadata metadata = {});

    const std::vector<QAPair>& pairs() const noexcept { return pairs_; }
    const KbMetadata& metadata() const noexcept { return metadata_; }
    size_t size() const noexcept { return pairs_.size(); }
    bool empty() const noexcept { return pairs_.empty(); }
    const QAPair& operator[](size_t i) const { return pairs_[i]; }

    // Row position of the pair with this id, if present.
    std::optional<size_t> position_of(std::int64_t id) const;
    const QAPair& by_id(std::int64_t id) const;

private:
    std::vector<QAPair> pairs_;
    KbMetadata metadata_;
    std::unordered_map<std::int64_t, size_t> position_;
};

// Throws when the pair violates the QAPair invariants.
void validate_pair(const QAPair& pair);

bool exact_match(std::string_view prediction, std::span<const std::string> golds);
bool exact_match(std::string_view prediction, std::string_view gold);

KnowledgeBase load_kb(const std::filesystem::path& path);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);
std::string serialize_kb(const KnowledgeBase& kb);
std::string serialize_pair(const QAPair& pair);

std::vector<PassageRecord> load_passages(const std::filesystem::path& path);
void save_passages(std::span<const PassageRecord> passages, const std::filesystem::path& path);

// Keeps the `keep` highest-scoring pairs; ties at the cut go to the lower id.
// Survivors retain their original relative order.
KnowledgeBase filter_by_score(const KnowledgeBase& kb, size_t keep);
KnowledgeBase filter_by_min_score(const KnowledgeBase& kb, double min_score);

// First occurrence of each normalized question wins.
std::vector<QAPair> dedup_questions(std::span<const QAPair> pairs);

struct IdMapping {
    size_t source_index = 0;
    std::int64_t original_id = 0;
    std::int64_t new_id = 0;
};

struct ConcatResult {
    KnowledgeBase kb;
    std::vector<IdMapping> mapping;
};

// Concatenates in order. An id already taken by an earlier pair is re-mapped
// to the next id above every id seen in any input.
ConcatResult concat_kbs(std::span<const KnowledgeBase> kbs);

}  // namespace paq
