#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "paq/embed.hpp"
#include "paq/error.hpp"
#include "paq/rerank.hpp"
#include "paq/retrieve.hpp"
#include "paq/synthetic.hpp"

using namespace paq;
using testing::iota_ids;
using testing::pair;

namespace {

EmbedderSpec small_spec() {
    EmbedderSpec s;
    s.dim = 256;
    return s;
}

Retriever make_retriever(KnowledgeBase kb, IndexKind kind = IndexKind::flat) {
    auto shared = std::make_shared<const KnowledgeBase>(std::move(kb));
    auto embedder = std::make_shared<const FeatureHashEmbedder>(small_spec());
    const Matrix rows = embed_kb(*shared, *embedder);
    std::vector<std::int64_t> ids;
    for (const auto& p : shared->pairs()) ids.push_back(p.id);
    IndexBuildSpec spec;
    spec.kind = kind;
    std::shared_ptr<const VectorIndex> index = build_index(rows, ids, spec);
    return Retriever(shared, index, embedder);
}

}  // namespace

TEST_CASE("identical question retrieves its pair with score 1") {
    const auto r = make_retriever(KnowledgeBase({
        pair(0, "who created the dutch comic strip panda", "Martin Toonder"),
        pair(1, "capital of france", "Paris"),
        pair(2, "who wrote hamlet", "Shakespeare"),
    }));
    const auto res = r.retrieve("who created the dutch comic strip panda", 3);
    REQUIRE(res.size() == 3);
    CHECK(res[0].qa_id == 0);
    CHECK(res[0].retriever_score == doctest::Approx(1.0).epsilon(1e-5));
    for (size_t i = 0; i < res.size(); ++i) {
        CHECK(res[i].rank == i + 1);
        if (i > 0) CHECK(res[i].retriever_score <= res[i - 1].retriever_score);
    }
    const auto a = answer(r, "who created the dutch comic strip panda", AnswerConfig{});
    CHECK(a.answer == "Martin Toonder");
    CHECK(a.source == AnswerSource::retriever);
    CHECK(a.confidence == doctest::Approx(res[0].retriever_score));
    REQUIRE(a.matches.size() == 1);
    CHECK(a.matches[0].pair.answer == a.answer);
    CHECK_THROWS_AS(r.retrieve("x", 0), Error);
}

TEST_CASE("single pair, empty KB and mismatches") {
    const auto one = make_retriever(KnowledgeBase({pair(4, "only question", "only answer")}));
    CHECK(one.retrieve("something else entirely", 1).at(0).qa_id == 4);

    const auto empty = make_retriever(KnowledgeBase{});
    try {
        answer(empty, "anything", AnswerConfig{});
        FAIL("empty KB answered");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("knowledge base empty") != std::string::npos);
    }

    auto kb = std::make_shared<const KnowledgeBase>(KnowledgeBase({pair(0, "a", "b")}));
    auto emb = std::make_shared<const FeatureHashEmbedder>(small_spec());
    std::shared_ptr<const VectorIndex> two =
        std::make_unique<FlatIndex>(build_flat(Matrix(2, 256), {0, 1}));
    CHECK_THROWS_AS(Retriever(kb, two, emb), Error);
    std::shared_ptr<const VectorIndex> narrow =
        std::make_unique<FlatIndex>(build_flat(Matrix(1, 16), {0}));
    CHECK_THROWS_AS(Retriever(kb, narrow, emb), Error);
}

TEST_CASE("identical stored questions tie to the lower id") {
    const auto r = make_retriever(KnowledgeBase({
        pair(9, "who painted the mona lisa", "Leonardo"),
        pair(3, "who painted the mona lisa", "da Vinci"),
        pair(5, "who painted guernica", "Picasso"),
    }));
    const auto a = answer(r, "who painted the mona lisa", AnswerConfig{});
    CHECK(a.answer == "da Vinci");
    CHECK(a.matches.at(0).pair.id == 3);
}

TEST_CASE("paraphrase clusters retrieve their own cluster") {
    // Ten clusters, three phrasings each, sharing at least three content words.
    const char* topics[][3] = {
        {"volcano", "erupted", "iceland"},   {"river", "flows", "through"},
        {"composer", "symphony", "ninth"},   {"bridge", "golden", "gate"},
        {"treaty", "signed", "versailles"},  {"planet", "largest", "solar"},
        {"inventor", "telephone", "patent"}, {"marathon", "runner", "record"},
        {"painter", "starry", "night"},      {"desert", "sahara", "largest"},
    };
    std::vector<QAPair> pairs;
    for (int c = 0; c < 10; ++c) {
        const std::string core = std::string(topics[c][0]) + " " + topics[c][1] + " " + topics[c][2];
        pairs.push_back(pair(c * 3, "what " + core, "ans" + std::to_string(c)));
        pairs.push_back(pair(c * 3 + 1, "which " + core + " first", "ans" + std::to_string(c)));
        pairs.push_back(pair(c * 3 + 2, "tell me about " + core, "ans" + std::to_string(c)));
    }
    const auto r = make_retriever(KnowledgeBase(pairs));
    int good = 0;
    for (int c = 0; c < 10; ++c) {
        const std::string q = std::string("the ") + topics[c][2] + " " + topics[c][0] + " " +
                              topics[c][1] + " question";
        good += r.retrieve(q, 1).at(0).qa_id / 3 == c;
    }
    CHECK(good >= 9);
}

TEST_CASE("batch answers equal sequential answers") {
    const auto set = synthetic::paraphrase_qa(50, 3, 2);
    const auto r = make_retriever(set.kb, IndexKind::hnsw);
    std::vector<std::string> qs;
    for (const auto& item : set.test) qs.push_back(item.question);
    for (size_t threads : {1, 4}) {
        AnswerConfig cfg;
        cfg.threads = threads;
        cfg.k = 3;
        const auto batch = batch_answer(r, qs, cfg);
        REQUIRE(batch.size() == qs.size());
        for (size_t i = 0; i < qs.size(); ++i) {
            const auto single = answer(r, qs[i], cfg);
            CHECK(batch[i].answer == single.answer);
            CHECK(batch[i].confidence == single.confidence);
            CHECK(batch[i].matches.size() == 3);
        }
    }
    CHECK(batch_answer(r, {}, AnswerConfig{}).empty());
    const std::vector<std::string> dup(1000, "who wrote hamlet");
    const auto preds = batch_answer(r, dup, AnswerConfig{});
    for (const auto& p : preds) CHECK(p.answer == preds[0].answer);
}

TEST_CASE("rerank mode reports the reranker score") {
    const auto r = make_retriever(KnowledgeBase({
        pair(0, "who wrote the play hamlet", "Shakespeare"),
        pair(1, "who wrote hamlet the novel", "Someone"),
        pair(2, "capital of france", "Paris"),
    }));
    LexicalScorer lex;
    AnswerConfig cfg;
    cfg.reranker = &lex;
    const auto a = answer(r, "who wrote hamlet", cfg);
    CHECK(a.source == AnswerSource::reranker);
    CHECK(a.confidence == doctest::Approx(
                              lexical_cross_score("who wrote hamlet", a.matches[0].pair.question,
                                                  a.matches[0].pair.answer)));
    CHECK(a.answer == a.matches[0].pair.answer);
    cfg.confidence = ConfidenceFrom::retriever;
    const auto b = answer(r, "who wrote hamlet", cfg);
    CHECK(b.answer == a.answer);
    CHECK(b.confidence <= 1.0 + 1e-6);
}

TEST_CASE("adding pairs never lowers the best score") {
    std::mt19937_64 rng(8);
    const auto set = synthetic::paraphrase_qa(60, 3, 4);
    const auto& all = set.kb.pairs();
    for (int t = 0; t < 10; ++t) {
        const size_t cut = 1 + rng() % (all.size() - 1);
        const auto small = make_retriever(KnowledgeBase({all.begin(), all.begin() + cut}));
        const auto big = make_retriever(set.kb);
        for (size_t i = 0; i < 10; ++i) {
            const auto& q = set.test[rng() % set.test.size()].question;
            CHECK(big.retrieve(q, 1)[0].retriever_score >= small.retrieve(q, 1)[0].retriever_score);
        }
    }
}

TEST_CASE("benches report sane numbers") {
    const auto set = synthetic::paraphrase_qa(40, 3, 1);
    const auto r = make_retriever(set.kb);
    std::vector<std::string> qs(1000, "who is the author");
    const auto rep = throughput_bench(r, qs, AnswerConfig{}, 2);
    CHECK(rep.questions == 1000);
    CHECK(rep.repetitions == 2);
    CHECK(rep.rep_seconds.size() == 2);
    CHECK(rep.questions_per_second > 0);
    CHECK(rep.p50_ms <= rep.p99_ms);
    CHECK(rep.index_type == "flat");

    const Matrix rows = synthetic::unit_vectors(2000, 16, 1);
    const auto index = build_hnsw(rows, iota_ids(2000), HnswParams{});
    const auto vrep = vector_bench(index, synthetic::unit_vectors(100, 16, 2), 1, 3);
    CHECK(vrep.index_type == "hnsw");
    CHECK(vrep.rep_seconds.size() == 3);
    CHECK(vrep.questions_per_second > 0);
}

TEST_CASE("larger search width does not lower recall") {
    const Matrix rows = synthetic::unit_vectors(10000, 64, 31);
    const Matrix qs = synthetic::unit_vectors(200, 64, 32);
    const auto ids = iota_ids(10000);
    HnswParams p;
    p.m = 16;
    p.ef_construction = 40;
    const auto index = build_hnsw(rows, ids, p);
    const auto flat = build_flat(rows, ids);
    double low = 0, high = 0;
    for (size_t i = 0; i < qs.rows(); ++i) {
        const auto exact = flat.search(qs.row(i), 10);
        low += testing::recall_at(index.search(qs.row(i), 10, 16), exact, 10);
        high += testing::recall_at(index.search(qs.row(i), 10, 64), exact, 10);
    }
    CHECK(high >= low);
}
