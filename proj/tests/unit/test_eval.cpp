#include <doctest.h>

#include <random>

#include "golden.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "paq/error.hpp"
#include "paq/eval.hpp"
#include "paq/jsonl.hpp"
#include "paq/synthetic.hpp"

using namespace paq;
using testing::pair;

TEST_CASE("hand-verified metric cases") {
    const auto cases = testing::metric_golden_cases();
    CHECK(cases.size() >= 30);
    for (const auto& c : cases) {
        INFO(c.name << " " << c.detail);
        CHECK(c.ok);
    }
}

TEST_CASE("rouge agrees with the LCS table on random sequences") {
    std::mt19937_64 rng(5);
    const char* vocab[] = {"a", "b", "c", "d", "e"};
    for (int t = 0; t < 300; ++t) {
        std::vector<std::string> x(rng() % 12), y(rng() % 12);
        for (auto& w : x) w = vocab[rng() % 5];
        for (auto& w : y) w = vocab[rng() % 5];
        CHECK(lcs_length(x, y) == testing::lcs_table(x, y));
    }
}

TEST_CASE("rouge properties") {
    const auto s = rouge_l("one two three four", "two four five");
    const auto r = rouge_l("two four five", "one two three four");
    CHECK(s.precision == r.recall);
    CHECK(s.recall == r.precision);
    CHECK(s.f1 == r.f1);
    const auto same = rouge_l("Same words here.", "same words here");
    CHECK(same.f1 == 1.0);
}

TEST_CASE("datasets reject or flag duplicates") {
    testing::TempDir dir;
    write_file(dir / "d.jsonl",
               "{\"question\":\"Who?\",\"answers\":[\"x\"]}\n"
               "{\"question\":\"who\",\"answers\":[\"y\"]}\n");
    CHECK_THROWS_AS(load_dataset(dir / "d.jsonl"), Error);
    const auto flagged = load_dataset(dir / "d.jsonl", DuplicatePolicy::flag);
    CHECK(flagged.size() == 2);
    CHECK(flagged.duplicates == std::vector<size_t>{1});
    write_file(dir / "e.jsonl", "{\"question\":\"q\",\"answers\":[]}\n");
    CHECK_THROWS_AS(load_dataset(dir / "e.jsonl"), Error);
}

TEST_CASE("EM is order-free over golds and checks lengths") {
    const auto a = make_dataset({{"q1", {"x", "y"}}, {"q2", {"z"}}});
    const auto b = make_dataset({{"q1", {"y", "x"}}, {"q2", {"z"}}});
    const std::vector<std::string> preds = {"y", "z"};
    CHECK(evaluate_em(preds, a) == 100.0);
    CHECK(evaluate_em(preds, b) == 100.0);
    const std::vector<std::string> wrong = {"n", "n"};
    CHECK(evaluate_em(wrong, a) == 0.0);
    const std::vector<std::string> one = {"y"};
    CHECK_THROWS_AS(evaluate_em(one, a), Error);
}

TEST_CASE("coverage is monotone under KB union") {
    std::mt19937_64 rng(9);
    std::vector<EvalItem> items;
    for (int i = 0; i < 30; ++i) items.push_back({"q" + std::to_string(i), {"ans" + std::to_string(i % 17)}});
    const auto ds = make_dataset(items);
    for (int t = 0; t < 50; ++t) {
        std::vector<QAPair> a, b;
        for (int i = 0; i < 10; ++i) {
            a.push_back(pair(i, "x", "ans" + std::to_string(rng() % 25)));
            b.push_back(pair(i, "x", "ans" + std::to_string(rng() % 25)));
        }
        const KnowledgeBase ka(a), kb(b);
        const std::vector<KnowledgeBase> parts = {ka, kb};
        const auto both = concat_kbs(parts);
        CHECK(answer_coverage(both.kb, ds) >=
              std::max(answer_coverage(ka, ds), answer_coverage(kb, ds)));
    }
}

TEST_CASE("overlap labels partition the test set") {
    const auto set = synthetic::paraphrase_qa(30, 3, 3);
    std::vector<EvalItem> train;
    for (const auto& p : set.kb.pairs()) train.push_back({p.question, {p.answer}});
    const auto tr = make_dataset(train);
    const auto te = make_dataset(set.test);
    const auto labels = overlap_splits(tr, te);
    std::vector<bool> correct(labels.size(), true);
    const auto rows = split_em(labels, correct);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].count + rows[1].count + rows[2].count == te.size());
    testing::TempDir dir;
    write_file(dir / "p.jsonl", "{\"test_id\":0,\"train_id\":4}\n");
    const auto links = load_paraphrases(dir / "p.jsonl");
    REQUIRE(links.size() == 1);
    CHECK(overlap_splits(tr, te, links)[0] == OverlapLabel::q_overlap);
    CHECK(to_string(OverlapLabel::a_only_overlap) == "a-only-overlap");
}

TEST_CASE("size accounting") {
    CHECK(bytes_per_index_item(QuantMode::none, 768) == 3072);
    CHECK(bytes_per_index_item(QuantMode::int8_per_dim, 768) == 768);
    SizeComponents c{1000, 2.0, 50, 10, 4.0};
    CHECK(size_estimate(c) == 2000 + 50 + 40);
    const std::string text(100000, 'a');
    const auto packed = lzma_compressed_size(text);
    CHECK(packed > 0);
    CHECK(packed < 1000);
    CHECK(lzma_compressed_size("") > 0);
}

TEST_CASE("budget sweep") {
    // Facts answered by the top-scored pairs; filler pairs score lower.
    const auto set = synthetic::paraphrase_qa(20, 3, 8);
    std::vector<QAPair> pairs = set.kb.pairs();
    for (auto& p : pairs) p.score = 2.0;
    for (int i = 0; i < 40; ++i) {
        pairs.push_back(pair(1000 + i, "filler question " + std::to_string(i), "filler", 0.5));
    }
    const KnowledgeBase kb(pairs);
    const auto ds = make_dataset(set.test);
    SweepConfig cfg;
    cfg.embedder.dim = 256;
    cfg.index.kind = IndexKind::flat;
    cfg.model_params = 1000;
    const std::vector<size_t> budgets = {10, 60, kb.size()};
    const auto rows = budget_sweep(kb, ds, budgets, cfg);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].em == rows[2].em);
    CHECK(rows[0].bytes < rows[1].bytes);
    CHECK(rows[1].bytes < rows[2].bytes);
    // The row's bytes are the sum of the independently measured parts.
    const auto kept = filter_by_score(kb, 60);
    const double want = static_cast<double>(lzma_compressed_size(serialize_kb(kept))) +
                        60.0 * 4 * 256 + 1000 * 2.0;
    CHECK(rows[1].bytes == doctest::Approx(want));
    CHECK(sweep_tsv(rows).rfind("budget\tbytes\tem\ttext_bytes\n", 0) == 0);

    const std::vector<size_t> unsorted = {60, 10};
    CHECK_THROWS_AS(budget_sweep(kb, ds, unsorted, cfg), Error);
    const std::vector<size_t> too_big = {kb.size() + 1};
    CHECK_THROWS_AS(budget_sweep(kb, ds, too_big, cfg), Error);
}
