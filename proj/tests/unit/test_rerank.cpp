#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "helpers.hpp"
#include "paq/embed.hpp"
#include "paq/error.hpp"
#include "paq/rerank.hpp"
#include "paq/text.hpp"

using namespace paq;
using testing::pair;

namespace {

// Brute-force token F1: count every shared token by scanning both lists.
double oracle_f1(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0.0;
    std::vector<bool> used(b.size(), false);
    double common = 0;
    for (const auto& t : a) {
        for (size_t j = 0; j < b.size(); ++j) {
            if (!used[j] && b[j] == t) {
                used[j] = true;
                ++common;
                break;
            }
        }
    }
    if (common == 0) return 0.0;
    const double p = common / b.size(), r = common / a.size();
    return 2 * p * r / (p + r);
}

struct ConstScorer final : CrossScorer {
    double score(std::string_view, std::string_view, std::string_view) const override { return 0.5; }
};

Candidate cand(std::int64_t id, std::string q, std::string a, double retr) {
    return {pair(id, std::move(q), std::move(a)), retr, std::nullopt};
}

}  // namespace

TEST_CASE("featurize joins with separators and escapes them") {
    CHECK(featurize("a", "b", "c") == "a [SEP] b [SEP] c");
    CHECK(featurize("a", "b", "") == "a [SEP] b [SEP] ");
    CHECK(featurize("x [SEP] y", "b", "c") == "x [SEP_] y [SEP] b [SEP] c");
    CHECK(featurize("a", "b [SEP]", "c") != featurize("a", "b", "[SEP] c"));
}

TEST_CASE("lexical scorer examples") {
    CHECK(lexical_cross_score("who wrote hamlet", "who wrote hamlet", "x") >= 0.95);
    CHECK(lexical_cross_score("who wrote hamlet", "capital of france", "paris") == 0.0);
    // Articles vanish under normalization: 3 input tokens vs 4 candidate tokens.
    CHECK(lexical_cross_score("who wrote hamlet", "who wrote the play hamlet", "Shakespeare") ==
          doctest::Approx(2.0 * 0.75 / 1.75));
    CHECK(lexical_cross_score("who wrote hamlet", "capital of france", "hamlet") ==
          doctest::Approx(0.05));
    CHECK(lexical_cross_score("who wrote hamlet", "who wrote hamlet", "hamlet") == 1.0);
}

TEST_CASE("lexical scorer matches a brute-force token counter") {
    const char* words[] = {"who", "what", "the", "hamlet", "wrote", "play", "a", "city", "river", "of"};
    std::mt19937_64 rng(12);
    auto sentence = [&] {
        std::string s;
        for (size_t i = rng() % 7; i > 0; --i) s += std::string(words[rng() % 10]) + " ";
        return s;
    };
    for (int t = 0; t < 500; ++t) {
        const auto q = sentence(), c = sentence(), a = sentence();
        const auto qt = split_whitespace(normalize_answer(q));
        const auto ct = split_whitespace(normalize_answer(c));
        const auto at = split_whitespace(normalize_answer(a));
        bool bonus = false;
        for (const auto& x : qt) bonus = bonus || std::count(at.begin(), at.end(), x) > 0;
        const double want = std::min(1.0, oracle_f1(qt, ct) + (bonus ? 0.05 : 0.0));
        CHECK(lexical_cross_score(q, c, a) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("rerank orders by score, then retriever score, then id") {
    LexicalScorer lex;
    std::vector<Candidate> cs = {
        cand(1, "capital of france", "Paris", 0.9),
        cand(2, "who wrote the play hamlet", "Shakespeare", 0.8),
        cand(3, "who wrote hamlet", "Shakespeare", 0.7),
    };
    const auto out = rerank("who wrote hamlet", cs, lex);
    REQUIRE(out.size() == 3);
    CHECK(out[0].qa.id == 3);
    CHECK(out[1].qa.id == 2);
    CHECK(out[2].qa.id == 1);
    for (const auto& c : out) REQUIRE(c.rerank_score.has_value());
    CHECK(*out[1].rerank_score == doctest::Approx(2.0 * 0.75 / 1.75));

    ConstScorer flat;
    const auto same = rerank("q", {cand(5, "a", "x", 0.3), cand(4, "b", "x", 0.3), cand(9, "c", "x", 0.6)}, flat);
    CHECK(same[0].qa.id == 9);
    CHECK(same[1].qa.id == 4);
    CHECK(same[2].qa.id == 5);

    const auto single = rerank("q", {cand(7, "a", "x", 0.1)}, lex);
    REQUIRE(single.size() == 1);
    CHECK(single[0].qa.id == 7);
    CHECK(single[0].rerank_score.has_value());

    CHECK(rerank("q", cs, lex, 2).size() == 2);
    CHECK_THROWS_AS(rerank("q", {}, lex), Error);
}

TEST_CASE("rerank is invariant to input permutation") {
    LexicalScorer lex;
    std::mt19937_64 rng(2);
    std::vector<Candidate> cs;
    for (int i = 0; i < 20; ++i) {
        cs.push_back(cand(i, (i % 3 ? "who wrote hamlet" : "who is there"), "a", (i % 4) * 0.1));
    }
    const auto ref = rerank("who wrote hamlet", cs, lex);
    for (int t = 0; t < 20; ++t) {
        std::shuffle(cs.begin(), cs.end(), rng);
        const auto out = rerank("who wrote hamlet", cs, lex);
        for (size_t i = 0; i < out.size(); ++i) CHECK(out[i].qa.id == ref[i].qa.id);
    }
}

TEST_CASE("reranker training data") {
    std::vector<QAPair> pairs;
    for (int i = 0; i < 20; ++i) {
        pairs.push_back(pair(i, "question number " + std::to_string(i) + " about topic " +
                                    std::to_string(i % 4),
                             "answer" + std::to_string(i % 5)));
    }
    auto kb = std::make_shared<const KnowledgeBase>(KnowledgeBase(pairs));
    EmbedderSpec spec;
    spec.dim = 128;
    auto emb = std::make_shared<const FeatureHashEmbedder>(spec);
    std::shared_ptr<const VectorIndex> index = std::make_unique<FlatIndex>(
        build_flat(embed_kb(*kb, *emb), testing::iota_ids(20)));
    const Retriever r(kb, index, emb);

    std::vector<TrainingPair> train = {
        {0, "question number 3 about topic 3", {"answer3"}},
        {1, "question number 7 about topic 3", {"answer2", "ANSWER2!"}},
        {2, "unrelated", {"nothing matches"}},
    };
    RerankDataConfig cfg;
    cfg.n_candidates = 20;
    cfg.n_negatives = 10;
    cfg.seed = 5;
    RerankDataStats stats;
    const auto ex = build_reranker_training_data(train, r, cfg, &stats);
    CHECK(stats.requested == 3);
    CHECK(stats.built == 2);
    CHECK(stats.skipped_no_positive == 1);
    REQUIRE(ex.size() == 2);
    CHECK(ex[0].positive.id == 3);
    CHECK(ex[1].positive.id == 7);
    for (size_t i = 0; i < ex.size(); ++i) {
        CHECK(exact_match(ex[i].positive.answer, train[i].answers));
        CHECK(ex[i].negatives.size() == 10);
        for (const auto& n : ex[i].negatives) CHECK_FALSE(exact_match(n.answer, train[i].answers));
    }
    CHECK(serialize_examples(ex) ==
          serialize_examples(build_reranker_training_data(train, r, cfg)));

    cfg.n_negatives = 50;
    const auto short_ex = build_reranker_training_data(train, r, cfg, &stats);
    CHECK(short_ex[0].short_negatives);
    CHECK(short_ex[0].negatives.size() == 16);
    CHECK(stats.short_negatives == 2);
}
