#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "paq/embed.hpp"
#include "paq/error.hpp"
#include "paq/jsonl.hpp"

using namespace paq;
using testing::pair;
using testing::TempDir;

namespace {

EmbedderSpec spec(size_t dim, std::uint64_t seed = 0) {
    EmbedderSpec s;
    s.dim = dim;
    s.seed = seed;
    return s;
}

// Independent restatement of the feature-hash recipe: FNV-1a, seed mixing
// and sign/slot extraction written out longhand over ASCII input.
std::vector<float> oracle_embed(const std::string& text, size_t dim, std::uint64_t seed) {
    auto mix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    };
    auto fnv = [](const std::string& s) {
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char c : s) {
            h = (h ^ c) * 1099511628211ULL;
        }
        return h;
    };
    std::vector<std::string> toks;
    std::string cur;
    for (char c : text + " ") {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            toks.push_back(cur);
            cur.clear();
        }
    }
    std::vector<std::string> feats;
    for (size_t i = 0; i < toks.size(); ++i) {
        feats.push_back(std::string("w\x1f") + toks[i]);
        if (i + 1 < toks.size()) feats.push_back(std::string("b\x1f") + toks[i] + " " + toks[i + 1]);
        for (size_t n = 3; n <= 5; ++n) {
            for (size_t s = 0; s + n <= toks[i].size(); ++s) {
                feats.push_back(std::string("c\x1f") + toks[i].substr(s, n));
            }
        }
    }
    std::vector<double> acc(dim, 0.0);
    for (const auto& f : feats) {
        const auto h = mix(fnv(f) ^ mix(seed));
        acc[(h & 0xFFFFFFFFULL) % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(dim);
    for (size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

}  // namespace

TEST_CASE("feature-hash embeddings are unit norm and deterministic") {
    const auto v = embed_text("moon", spec(64));
    CHECK(std::fabs(l2_norm(v) - 1.0f) <= 1e-5f);
    CHECK(embed_text("who wrote hamlet", spec(128)) == embed_text("who wrote hamlet", spec(128)));
    CHECK(embed_text("x", spec(64, 1)) != embed_text("x", spec(64, 2)));
    CHECK_THROWS_AS(embed_text("x", spec(7)), Error);
    // Punctuation-only text still yields a unit vector.
    CHECK(std::fabs(l2_norm(embed_text("?!", spec(32))) - 1.0f) <= 1e-5f);
}

TEST_CASE("feature-hash matches the longhand oracle") {
    for (const std::string text : {"who wrote hamlet", "Capital of FRANCE?", "a", "moon landing 1969"}) {
        const auto got = embed_text(text, spec(96, 5));
        const auto want = oracle_embed(text, 96, 5);
        for (size_t i = 0; i < 96; ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("shared n-grams raise similarity") {
    const auto s = spec(256);
    const auto a = embed_text("who wrote hamlet", s);
    const auto b = embed_text("who wrote hamlet?", s);
    const auto c = embed_text("capital of france", s);
    CHECK(dot(a, b) > dot(a, c));
    CHECK(dot(a, b) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("determinism over random strings") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        std::string s;
        for (size_t i = rng() % 40; i > 0; --i) s += static_cast<char>(' ' + rng() % 95);
        CHECK(embed_text(s, spec(64)) == embed_text(s, spec(64)));
        CHECK(std::fabs(l2_norm(embed_text(s, spec(64))) - 1.0f) <= 1e-5f);
    }
}

TEST_CASE("embed_kb shapes and permutation") {
    const KnowledgeBase kb({pair(0, "alpha", "x"), pair(1, "beta gamma", "x"), pair(2, "delta", "x")});
    const auto m = embed_kb(kb, spec(32));
    CHECK(m.rows() == 3);
    CHECK(m.dim() == 32);
    CHECK(embed_kb(KnowledgeBase{}, spec(32)).rows() == 0);

    const KnowledgeBase rev({pair(2, "delta", "x"), pair(1, "beta gamma", "x"), pair(0, "alpha", "x")});
    const auto r = embed_kb(rev, spec(32));
    for (size_t i = 0; i < 3; ++i) {
        const auto a = m.row(i);
        const auto b = r.row(2 - i);
        CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }
    FeatureHashEmbedder emb(spec(32));
    CHECK(embed_kb(kb, emb, 3) == m);
}

TEST_CASE("external-file embedder") {
    TempDir dir;
    const KnowledgeBase kb({pair(0, "a", "x"), pair(1, "b", "x")});
    Matrix rows(2, 16);
    rows.row(0)[0] = 1.0f;
    rows.row(1)[1] = 1.0f;
    save_vectors(rows, dir / "v.paqv");
    EmbedderSpec s = spec(16);
    s.kind = EmbedderKind::external_file;
    s.source = (dir / "v.paqv").string();
    CHECK(embed_kb(kb, s) == rows);
    const KnowledgeBase three({pair(0, "a", "x"), pair(1, "b", "x"), pair(2, "c", "x")});
    CHECK_THROWS_AS(embed_kb(three, s), Error);
    CHECK_THROWS_AS(make_embedder(s), Error);
}

TEST_CASE("subprocess embedder speaks the line protocol") {
    EmbedderSpec s = spec(8);
    s.kind = EmbedderKind::subprocess;
    s.source = "while read line; do echo '1 0 0 0 0 0 0 0'; done";
    const auto emb = make_embedder(s);
    const auto v = emb->embed("anything");
    CHECK(v == std::vector<float>{1, 0, 0, 0, 0, 0, 0, 0});

    s.source = "while read line; do echo '1 2 3'; done";
    const auto bad = make_embedder(s);
    CHECK_THROWS_AS(bad->embed("x"), Error);
}

TEST_CASE("vector files round trip and fail loudly") {
    TempDir dir;
    Matrix rows(2, 768);
    std::mt19937 rng(1);
    for (float& x : rows.data()) x = static_cast<float>(rng() % 1000) / 1000.0f;
    save_vectors(rows, dir / "v.paqv");
    CHECK(load_vectors(dir / "v.paqv", 768) == rows);
    const auto bytes = read_file(dir / "v.paqv");
    CHECK(bytes.size() == 20 + 2 * 768 * 4);
    CHECK(bytes.substr(0, 4) == "PAQV");
    save_vectors(load_vectors(dir / "v.paqv", 768), dir / "w.paqv");
    CHECK(read_file(dir / "w.paqv") == bytes);

    auto expect_code = [&](const std::string& content, size_t dim, ErrorCode code) {
        write_file(dir / "x.paqv", content);
        try {
            load_vectors(dir / "x.paqv", dim);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };
    expect_code(bytes, 128, ErrorCode::dim_mismatch);
    expect_code("XXXX" + bytes.substr(4), 768, ErrorCode::bad_magic);
    expect_code(bytes.substr(0, bytes.size() - 4), 768, ErrorCode::truncated);
    std::string v2 = bytes;
    v2[4] = 2;
    expect_code(v2, 768, ErrorCode::bad_version);

    VectorFile f;
    f.dtype = VectorDtype::int8;
    f.dim = 4;
    f.count = 1;
    f.int8 = {1, -2, 3, -127};
    write_vector_file(f, dir / "i.paqv");
    const auto back = read_vector_file(dir / "i.paqv");
    CHECK(back.int8 == f.int8);
    CHECK(back.dtype == VectorDtype::int8);
}
