#include "paq/kb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paq/error.hpp"
#include "paq/jsonl.hpp"
#include "paq/text.hpp"

namespace paq {

std::string_view to_string(QaSource source) {
    switch (source) {
        case QaSource::generated_learnt:
            return "generated-learnt";
        case QaSource::generated_ner:
            return "generated-ner";
        case QaSource::training_set:
            return "training-set";
        case QaSource::other:
            return "other";
    }
    return "other";
}

QaSource qa_source_from_string(std::string_view name) {
    if (name == "generated-learnt") return QaSource::generated_learnt;
    if (name == "generated-ner") return QaSource::generated_ner;
    if (name == "training-set") return QaSource::training_set;
    if (name == "other") return QaSource::other;
    throw_domain("unknown QA source '" + std::string(name) + "'", ErrorCode::malformed);
}

void validate_pair(const QAPair& pair) {
    if (split_whitespace(pair.question).empty()) {
        throw_domain("QA-pair " + std::to_string(pair.id) + " has an empty question",
                     ErrorCode::malformed);
    }
    if (split_whitespace(pair.answer).empty()) {
        throw_domain("QA-pair " + std::to_string(pair.id) + " has an empty answer",
                     ErrorCode::malformed);
    }
    if (!std::isfinite(pair.score)) {
        throw_domain("QA-pair " + std::to_string(pair.id) + " has a non-finite score",
                     ErrorCode::malformed);
    }
}

KnowledgeBase::KnowledgeBase(std::vector<QAPair> pairs, KbMetadata metadata)
    : pairs_(std::move(pairs)), metadata_(std::move(metadata)) {
    position_.reserve(pairs_.size());
    for (size_t i = 0; i < pairs_.size(); ++i) {
        validate_pair(pairs_[i]);
        if (!position_.emplace(pairs_[i].id, i).second) {
            throw_domain("duplicate QA-pair id " + std::to_string(pairs_[i].id),
                         ErrorCode::duplicate_id);
        }
    }
}

std::optional<size_t> KnowledgeBase::position_of(std::int64_t id) const {
    auto it = position_.find(id);
    if (it == position_.end()) {
        return std::nullopt;
    }
    return it->second;
}

const QAPair& KnowledgeBase::by_id(std::int64_t id) const {
    auto pos = position_of(id);
    if (!pos) {
        throw_domain("no QA-pair with id " + std::to_string(id), ErrorCode::not_found);
    }
    return pairs_[*pos];
}

bool exact_match(std::string_view prediction, std::string_view gold) {
    return normalize_answer(prediction) == normalize_answer(gold);
}

bool exact_match(std::string_view prediction, std::span<const std::string> golds) {
    if (golds.empty()) {
        throw_usage("exact_match requires at least one gold answer", ErrorCode::empty_input);
    }
    const std::string p = normalize_answer(prediction);
    return std::any_of(golds.begin(), golds.end(),
                       [&](const std::string& g) { return normalize_answer(g) == p; });
}

namespace {

QAPair pair_from_json(const nlohmann::json& j) {
    static const char* kFields[] = {"id", "question", "answer", "score", "passage_id", "source"};
    if (!j.is_object()) {
        throw_domain("record is not an object", ErrorCode::malformed);
    }
    for (const char* f : kFields) {
        if (!j.contains(f)) {
            throw_domain(std::string("missing field '") + f + "'", ErrorCode::malformed);
        }
    }
    if (j.size() != std::size(kFields)) {
        throw_domain("unexpected extra fields", ErrorCode::malformed);
    }
    if (!j["id"].is_number_integer() || !j["question"].is_string() ||
        !j["answer"].is_string() || !j["score"].is_number() || !j["source"].is_string() ||
        !(j["passage_id"].is_null() || j["passage_id"].is_number_integer())) {
        throw_domain("field has the wrong type", ErrorCode::malformed);
    }
    QAPair p;
    p.id = j["id"].get<std::int64_t>();
    p.question = j["question"].get<std::string>();
    p.answer = j["answer"].get<std::string>();
    p.score = j["score"].get<double>();
    if (!j["passage_id"].is_null()) {
        p.passage_id = j["passage_id"].get<std::int64_t>();
    }
    p.source = qa_source_from_string(j["source"].get<std::string>());
    validate_pair(p);
    return p;
}

}  // namespace

std::string serialize_pair(const QAPair& pair) {
    ordered_json j;
    j["id"] = pair.id;
    j["question"] = pair.question;
    j["answer"] = pair.answer;
    j["score"] = pair.score;
    j["passage_id"] = pair.passage_id ? ordered_json(*pair.passage_id) : ordered_json(nullptr);
    j["source"] = std::string(to_string(pair.source));
    return dump_line(j);
}

std::string serialize_kb(const KnowledgeBase& kb) {
    std::string out;
    for (const auto& p : kb.pairs()) {
        out += serialize_pair(p);
        out.push_back('\n');
    }
    return out;
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
    std::vector<QAPair> pairs;
    std::unordered_map<std::int64_t, size_t> first_line;
    for_each_jsonl(path, [&](size_t line, const nlohmann::json& j) {
        QAPair p;
        try {
            p = pair_from_json(j);
        } catch (const Error& e) {
            throw Error(e.kind(), e.code(),
                        path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
        auto [it, inserted] = first_line.emplace(p.id, line);
        if (!inserted) {
            throw_domain(path.string() + ": duplicate id " + std::to_string(p.id) + " on lines " +
                             std::to_string(it->second) + " and " + std::to_string(line),
                         ErrorCode::duplicate_id);
        }
        pairs.push_back(std::move(p));
    });
    return KnowledgeBase(std::move(pairs), KbMetadata{path.stem().string(), {}});
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
    write_file(path, serialize_kb(kb));
}

std::vector<PassageRecord> load_passages(const std::filesystem::path& path) {
    std::vector<PassageRecord> out;
    for_each_jsonl(path, [&](size_t line, const nlohmann::json& j) {
        const auto where = path.string() + ":" + std::to_string(line) + ": ";
        if (!j.is_object() || !j.contains("passage_id") || !j.contains("text") ||
            !j["passage_id"].is_number_integer() || !j["text"].is_string()) {
            throw_domain(where + "passage record needs integer passage_id and string text",
                         ErrorCode::malformed);
        }
        PassageRecord p;
        p.passage_id = j["passage_id"].get<std::int64_t>();
        p.title = j.value("title", std::string{});
        p.text = j["text"].get<std::string>();
        p.ps_score = j.contains("ps_score") && j["ps_score"].is_number()
                         ? j["ps_score"].get<double>()
                         : 0.0;
        if (split_whitespace(p.text).empty()) {
            throw_domain(where + "passage text is empty", ErrorCode::malformed);
        }
        if (!std::isfinite(p.ps_score)) {
            throw_domain(where + "ps_score is not finite", ErrorCode::malformed);
        }
        out.push_back(std::move(p));
    });
    return out;
}

void save_passages(std::span<const PassageRecord> passages, const std::filesystem::path& path) {
    std::string out;
    for (const auto& p : passages) {
        ordered_json j;
        j["passage_id"] = p.passage_id;
        j["title"] = p.title;
        j["text"] = p.text;
        j["ps_score"] = p.ps_score;
        out += dump_line(j);
        out.push_back('\n');
    }
    write_file(path, out);
}

namespace {

KnowledgeBase keep_positions(const KnowledgeBase& kb, std::vector<size_t> positions) {
    std::sort(positions.begin(), positions.end());
    std::vector<QAPair> pairs;
    pairs.reserve(positions.size());
    for (size_t pos : positions) {
        pairs.push_back(kb[pos]);
    }
    return KnowledgeBase(std::move(pairs), kb.metadata());
}

}  // namespace

KnowledgeBase filter_by_score(const KnowledgeBase& kb, size_t keep) {
    if (keep > kb.size()) {
        throw_usage("cannot keep " + std::to_string(keep) + " pairs from a KB of " +
                    std::to_string(kb.size()));
    }
    std::vector<size_t> order(kb.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const auto better = [&](size_t a, size_t b) {
        if (kb[a].score != kb[b].score) {
            return kb[a].score > kb[b].score;
        }
        return kb[a].id < kb[b].id;
    };
    if (keep < order.size()) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                         order.end(), better);
    }
    order.resize(keep);
    return keep_positions(kb, std::move(order));
}

KnowledgeBase filter_by_min_score(const KnowledgeBase& kb, double min_score) {
    std::vector<size_t> keep;
    for (size_t i = 0; i < kb.size(); ++i) {
        if (kb[i].score >= min_score) {
            keep.push_back(i);
        }
    }
    return keep_positions(kb, std::move(keep));
}

std::vector<QAPair> dedup_questions(std::span<const QAPair> pairs) {
    std::unordered_set<std::string> seen;
    std::vector<QAPair> out;
    for (const auto& p : pairs) {
        if (seen.insert(normalize_answer(p.question)).second) {
            out.push_back(p);
        }
    }
    return out;
}

ConcatResult concat_kbs(std::span<const KnowledgeBase> kbs) {
    std::int64_t next_free = 0;
    bool any = false;
    for (const auto& kb : kbs) {
        for (const auto& p : kb.pairs()) {
            next_free = any ? std::max(next_free, p.id + 1) : p.id + 1;
            any = true;
        }
    }
    ConcatResult result;
    std::unordered_set<std::int64_t> taken;
    std::vector<QAPair> pairs;
    for (size_t s = 0; s < kbs.size(); ++s) {
        for (QAPair p : kbs[s].pairs()) {
            const std::int64_t original = p.id;
            if (!taken.insert(p.id).second) {
                p.id = next_free++;
                taken.insert(p.id);
            }
            result.mapping.push_back({s, original, p.id});
            pairs.push_back(std::move(p));
        }
    }
    KbMetadata meta;
    meta.name = "concat";
    result.kb = KnowledgeBase(std::move(pairs), std::move(meta));
    return result;
}

}  // namespace paq
