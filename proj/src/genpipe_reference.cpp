#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "paq/error.hpp"
#include "paq/genpipe.hpp"
#include "paq/text.hpp"

namespace paq {

namespace {

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",     "an",    "the",   "of",    "in",     "on",     "at",      "to",     "for",
        "from",  "by",    "with",  "and",   "or",     "but",    "is",      "was",    "were",
        "are",   "be",    "been",  "being", "as",     "that",   "this",    "these",  "those",
        "it",    "its",   "his",   "her",   "their",  "he",     "she",     "they",   "we",
        "you",   "i",     "which", "who",   "whom",   "what",   "when",    "where",  "why",
        "how",   "into",  "onto",  "over",  "under",  "about",  "after",   "before", "during",
        "than",  "then",  "there", "here",  "also",   "not",    "no",      "so",     "such",
        "can",   "could", "would", "should", "will",  "may",    "might",   "must",   "do",
        "does",  "did",   "has",   "have",  "had",    "upon",   "within",  "without", "between",
        "among", "through", "many", "year", "or",    "if",     "while",   "both",   "each",
    };
    return words;
}

struct Token {
    size_t start = 0;  // raw token bounds in bytes
    size_t end = 0;
    size_t core_start = 0;  // bounds without edge punctuation
    size_t core_end = 0;
    std::string core;
    std::string lower;
    bool capitalized = false;
    bool digits = false;
    bool sentence_initial = false;
    bool sentence_final = false;
    size_t sentence = 0;
};

bool is_ws(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

UChar32 code_point_at(std::string_view s, size_t i, size_t* next) {
    const auto* p = reinterpret_cast<const uint8_t*>(s.data());
    auto idx = static_cast<int32_t>(i);
    UChar32 c = 0;
    U8_NEXT(p, idx, static_cast<int32_t>(s.size()), c);
    *next = static_cast<size_t>(idx);
    return c;
}

UChar32 code_point_before(std::string_view s, size_t i, size_t* prev) {
    const auto* p = reinterpret_cast<const uint8_t*>(s.data());
    auto idx = static_cast<int32_t>(i);
    UChar32 c = 0;
    U8_PREV(p, 0, idx, c);
    *prev = static_cast<size_t>(idx);
    return c;
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    size_t i = 0;
    size_t sentence = 0;
    bool next_initial = true;
    while (i < text.size()) {
        while (i < text.size() && is_ws(text[i])) {
            ++i;
        }
        if (i >= text.size()) {
            break;
        }
        Token t;
        t.start = i;
        while (i < text.size() && !is_ws(text[i])) {
            ++i;
        }
        t.end = i;
        size_t b = t.start;
        size_t e = t.end;
        while (b < e) {
            size_t nb = 0;
            const UChar32 c = code_point_at(text, b, &nb);
            if (c >= 0 && u_isalnum(c)) {
                break;
            }
            b = nb;
        }
        while (e > b) {
            size_t pe = 0;
            const UChar32 c = code_point_before(text, e, &pe);
            if (c >= 0 && u_isalnum(c)) {
                break;
            }
            e = pe;
        }
        t.core_start = b;
        t.core_end = e;
        t.core = std::string(text.substr(b, e - b));
        t.lower = to_lower(t.core);
        if (!t.core.empty()) {
            size_t nb = 0;
            const UChar32 first = code_point_at(t.core, 0, &nb);
            t.capitalized = first >= 0 && (u_isupper(first) || u_istitle(first));
            t.digits = std::all_of(t.core.begin(), t.core.end(),
                                   [](char c) { return c >= '0' && c <= '9'; });
        }
        t.sentence_initial = next_initial;
        t.sentence = sentence;
        const char last = text[t.end - 1];
        t.sentence_final = last == '.' || last == '!' || last == '?';
        next_initial = t.sentence_final;
        if (t.sentence_final) {
            ++sentence;
        }
        tokens.push_back(std::move(t));
    }
    return tokens;
}

bool is_year(const Token& t) {
    return t.digits && t.core.size() == 4;
}

bool is_content(const Token& t) {
    return !t.core.empty() && !stopwords().count(t.lower);
}

size_t char_length(std::string_view s) {
    return utf8_chars(s).size();
}

// Spans as [first_token, last_token] index pairs.
std::vector<std::pair<size_t, size_t>> entity_runs(const std::vector<Token>& tokens) {
    std::vector<std::pair<size_t, size_t>> runs;
    size_t i = 0;
    while (i < tokens.size()) {
        const Token& t = tokens[i];
        if (t.digits && !t.core.empty()) {
            runs.emplace_back(i, i);
            ++i;
            continue;
        }
        if (!t.capitalized) {
            ++i;
            continue;
        }
        size_t j = i;
        // A run stops at punctuation glued to a token (commas, periods).
        while (j + 1 < tokens.size() && tokens[j + 1].capitalized &&
               tokens[j].core_end == tokens[j].end && tokens[j + 1].core_start == tokens[j + 1].start &&
               tokens[j + 1].sentence == tokens[j].sentence) {
            ++j;
        }
        size_t first = i;
        if (tokens[first].sentence_initial && stopwords().count(tokens[first].lower)) {
            ++first;
        }
        while (first <= j) {
            const size_t last = std::min(j, first + kMaxSpanTokens - 1);
            runs.emplace_back(first, last);
            first = last + 1;
        }
        i = j + 1;
    }
    return runs;
}

std::vector<AnswerSpan> rule_spans(const PassageRecord& passage) {
    const auto tokens = tokenize(passage.text);
    std::vector<AnswerSpan> spans;
    for (const auto& [first, last] : entity_runs(tokens)) {
        const size_t start = tokens[first].core_start;
        const size_t end = tokens[last].core_end;
        if (end <= start) {
            continue;
        }
        const auto text = std::string_view(passage.text).substr(start, end - start);
        spans.push_back(
            make_span(passage, start, end, static_cast<double>(char_length(text))));
    }
    return spans;
}

enum class Shape { year, count, entity, any };

Shape shape_of_answer(std::string_view answer) {
    const auto core = trim(answer);
    const bool digits = !core.empty() && std::all_of(core.begin(), core.end(), [](char c) {
        return c >= '0' && c <= '9';
    });
    if (digits && core.size() == 4) {
        return Shape::year;
    }
    if (digits) {
        return Shape::count;
    }
    return Shape::entity;
}

Shape shape_of_question(std::string_view question) {
    const auto q = to_lower(trim(question));
    if (q.rfind("in what year", 0) == 0) return Shape::year;
    if (q.rfind("how many", 0) == 0) return Shape::count;
    if (q.rfind("who or what", 0) == 0) return Shape::entity;
    return Shape::any;
}

}  // namespace

AnswerSpan make_span(const PassageRecord& passage, size_t start, size_t end, double score) {
    if (!(start < end && end <= passage.text.size())) {
        throw_domain("answer span [" + std::to_string(start) + ", " + std::to_string(end) +
                         ") is outside passage " + std::to_string(passage.passage_id),
                     ErrorCode::malformed);
    }
    AnswerSpan span;
    span.passage_id = passage.passage_id;
    span.start = start;
    span.end = end;
    span.text = passage.text.substr(start, end - start);
    span.extraction_score = score;
    if (split_whitespace(span.text).size() > kMaxSpanTokens) {
        throw_domain("answer span '" + span.text + "' is longer than " +
                         std::to_string(kMaxSpanTokens) + " tokens",
                     ErrorCode::malformed);
    }
    return span;
}

double EntityDensityScorer::score(const PassageRecord& passage) const {
    const auto tokens = tokenize(passage.text);
    if (tokens.empty()) {
        return 0.0;
    }
    size_t caps = 0;
    size_t years = 0;
    for (const auto& t : tokens) {
        caps += t.capitalized ? 1 : 0;
        years += is_year(t) ? 1 : 0;
    }
    return static_cast<double>(caps) / static_cast<double>(tokens.size()) +
           std::log1p(static_cast<double>(years));
}

std::vector<AnswerSpan> RuleExtractor::extract(const PassageRecord& passage) const {
    return rule_spans(passage);
}

std::vector<BeamHypothesis> TemplateGenerator::generate(std::string_view passage, size_t start,
                                                        size_t end, std::string_view answer,
                                                        size_t beam) const {
    const auto tokens = tokenize(passage);
    std::string prefix;
    switch (shape_of_answer(answer)) {
        case Shape::year:
            prefix = "in what year";
            break;
        case Shape::count:
            prefix = "how many";
            break;
        default:
            prefix = "who or what";
            break;
    }
    // Token indices before/after the span, inside the span's sentence.
    size_t sentence = 0;
    bool found = false;
    for (const auto& t : tokens) {
        if (t.core_end > start && t.core_start < end) {
            sentence = t.sentence;
            found = true;
            break;
        }
    }
    std::vector<size_t> before;
    std::vector<size_t> after;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (!found || t.sentence != sentence || !is_content(t)) {
            continue;
        }
        if (t.core_end <= start) {
            before.push_back(i);
        } else if (t.core_start >= end) {
            after.push_back(i);
        }
    }
    std::reverse(before.begin(), before.end());  // nearest first

    std::vector<BeamHypothesis> out;
    for (size_t rank = 1; rank <= beam; ++rank) {
        static constexpr size_t kWindows[] = {8, 8, 5, 3};
        const size_t window = rank <= 4 ? kWindows[rank - 1] : std::max<size_t>(1, 8 - rank);
        const bool following_first = rank == 2;
        std::vector<size_t> chosen;
        const auto take_from = [&](const std::vector<size_t>& src) {
            for (size_t idx : src) {
                if (chosen.size() >= window) {
                    break;
                }
                chosen.push_back(idx);
            }
        };
        if (following_first) {
            take_from(after);
            take_from(before);
        } else {
            take_from(before);
            take_from(after);
        }
        std::sort(chosen.begin(), chosen.end());
        std::string q = prefix;
        for (size_t idx : chosen) {
            q += " " + tokens[idx].core;
        }
        q += "?";
        out.push_back({std::move(q), 1.0 / static_cast<double>(rank)});
    }
    return out;
}

std::string RuleReader::answer(std::string_view question, std::string_view passage) const {
    PassageRecord rec;
    rec.text = std::string(passage);
    if (split_whitespace(rec.text).empty()) {
        return {};
    }
    const auto tokens = tokenize(rec.text);
    const auto spans = rule_spans(rec);
    std::unordered_set<std::string> q_words;
    for (const auto& t : tokenize(question)) {
        if (!t.core.empty()) {
            q_words.insert(t.lower);
        }
    }
    const Shape want = shape_of_question(question);
    const auto shape_ok = [&](const AnswerSpan& s) {
        return want == Shape::any || shape_of_answer(s.text) == want;
    };
    const bool any_typed = std::any_of(spans.begin(), spans.end(), shape_ok);

    const AnswerSpan* best = nullptr;
    long best_score = -1;
    for (const auto& s : spans) {
        if (any_typed && !shape_ok(s)) {
            continue;
        }
        const auto words = alnum_tokens(s.text);
        const bool in_question = !words.empty() && std::all_of(words.begin(), words.end(), [&](const std::string& w) {
            return q_words.count(w) > 0;
        });
        if (in_question) {
            continue;
        }
        size_t sentence = 0;
        for (const auto& t : tokens) {
            if (t.core_end > s.start && t.core_start < s.end) {
                sentence = t.sentence;
                break;
            }
        }
        std::unordered_set<std::string> seen;
        long overlap = 0;
        for (const auto& t : tokens) {
            if (t.sentence != sentence || (t.core_end > s.start && t.core_start < s.end)) {
                continue;
            }
            if (is_content(t) && q_words.count(t.lower) && seen.insert(t.lower).second) {
                ++overlap;
            }
        }
        if (overlap > best_score) {
            best_score = overlap;
            best = &s;
        }
    }
    return best ? best->text : std::string{};
}

CorpusAnswerer::CorpusAnswerer(std::vector<PassageRecord> corpus) : corpus_(std::move(corpus)) {
    std::stable_sort(corpus_.begin(), corpus_.end(),
                     [](const PassageRecord& a, const PassageRecord& b) {
                         return a.passage_id < b.passage_id;
                     });
    for (const auto& p : corpus_) {
        auto words = alnum_tokens(p.text);
        std::sort(words.begin(), words.end());
        words.erase(std::unique(words.begin(), words.end()), words.end());
        tokens_.push_back(std::move(words));
    }
}

std::string CorpusAnswerer::answer(std::string_view question) const {
    std::vector<std::string> q;
    for (auto& w : alnum_tokens(question)) {
        if (!stopwords().count(w)) {
            q.push_back(std::move(w));
        }
    }
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    long best = -1;
    size_t best_idx = 0;
    for (size_t i = 0; i < corpus_.size(); ++i) {
        long overlap = 0;
        for (const auto& w : q) {
            overlap += std::binary_search(tokens_[i].begin(), tokens_[i].end(), w) ? 1 : 0;
        }
        if (overlap > best) {
            best = overlap;
            best_idx = i;
        }
    }
    if (best <= 0) {
        return {};
    }
    return reader_.answer(question, corpus_[best_idx].text);
}

LookupAnswerer::LookupAnswerer(std::span<const GeneratedQuestion> questions) {
    for (const auto& q : questions) {
        table_.emplace_back(q.question, q.answer);
    }
    std::stable_sort(table_.begin(), table_.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
}

std::string LookupAnswerer::answer(std::string_view question) const {
    auto it = std::lower_bound(table_.begin(), table_.end(), question,
                               [](const auto& e, std::string_view q) { return e.first < q; });
    if (it != table_.end() && it->first == question) {
        return it->second;
    }
    return {};
}

BackendSet make_reference_backends(std::vector<PassageRecord> corpus) {
    BackendSet set;
    set.scorer = std::make_unique<EntityDensityScorer>();
    set.extractor = std::make_unique<RuleExtractor>();
    set.generator = std::make_unique<TemplateGenerator>();
    set.local = std::make_unique<RuleReader>();
    set.global = std::make_unique<CorpusAnswerer>(std::move(corpus));
    return set;
}

}  // namespace paq
