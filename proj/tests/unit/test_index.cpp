#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "helpers.hpp"
#include "paq/error.hpp"
#include "paq/index.hpp"
#include "paq/jsonl.hpp"
#include "paq/synthetic.hpp"

using namespace paq;
using testing::brute_force;
using testing::iota_ids;
using testing::recall_at;
using testing::TempDir;

namespace {

// Small-integer rows so exact score ties are common.
Matrix tie_heavy(size_t n, size_t dim, std::mt19937_64& rng) {
    Matrix m(n, dim);
    for (float& x : m.data()) {
        x = static_cast<float>(static_cast<int>(rng() % 5) - 2);
    }
    return m;
}

}  // namespace

TEST_CASE("flat search equals argsort, including ties") {
    std::mt19937_64 rng(3);
    for (int inst = 0; inst < 200; ++inst) {
        const size_t n = 1 + rng() % 60;
        const size_t dim = 1 + rng() % 6;
        const Matrix rows = tie_heavy(n, dim, rng);
        std::vector<std::int64_t> ids(n);
        std::set<std::int64_t> used;
        for (auto& id : ids) {
            do {
                id = static_cast<std::int64_t>(rng() % 1000);
            } while (!used.insert(id).second);
        }
        const auto index = build_flat(rows, ids);
        const Matrix q = tie_heavy(1, dim, rng);
        const size_t k = 1 + rng() % (n + 3);
        CHECK(index.search(q.row(0), k) == brute_force(rows, ids, q.row(0), k));
    }
}

TEST_CASE("flat index basics and errors") {
    const Matrix rows(3, 2, {1, 0, 0, 1, 0.5f, 0.5f});
    const auto index = build_flat(rows, {10, 20, 30});
    const std::vector<float> q = {1, 0};
    const auto hits = index.search(q, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0] == Hit{10, 1.0f});
    CHECK(hits[1] == Hit{30, 0.5f});
    CHECK(index.search(q, 99).size() == 3);
    CHECK_THROWS_AS(index.search(q, 0), Error);
    const std::vector<float> bad = {1, 0, 0};
    CHECK_THROWS_AS(index.search(bad, 1), Error);
    CHECK_THROWS_AS(build_flat(rows, {1, 2}), Error);
    CHECK(build_flat(Matrix(0, 4), {}).search(std::vector<float>(4, 1.0f), 3).empty());
}

TEST_CASE("int8 round trip stays within one quantization step") {
    const Matrix rows = synthetic::unit_vectors(2000, 32, 17);
    const auto store = VectorStore::quantize(rows, QuantMode::int8_per_dim);
    std::vector<float> lo(32, 1e9f), hi(32, -1e9f);
    for (size_t i = 0; i < rows.rows(); ++i) {
        for (size_t d = 0; d < 32; ++d) {
            lo[d] = std::min(lo[d], rows.row(i)[d]);
            hi[d] = std::max(hi[d], rows.row(i)[d]);
        }
    }
    const Matrix back = store.dequantize();
    for (size_t i = 0; i < rows.rows(); ++i) {
        for (size_t d = 0; d < 32; ++d) {
            const double bound = (hi[d] - lo[d]) / 254.0 + 1e-6;
            CHECK(std::fabs(back.row(i)[d] - rows.row(i)[d]) <= bound);
        }
    }
    CHECK(store.memory_bytes() == 2000 * 32 + 2 * 32 * 4);
}

TEST_CASE("int8 constant dimension and store scoring") {
    const Matrix rows(3, 2, {0.5f, -1, 0.5f, 0, 0.5f, 1});
    const auto spec = fit_int8(rows);
    CHECK(spec.scale[0] == 1.0f);
    CHECK(spec.offset[0] == 0.5f);
    CHECK(spec.scale[1] == doctest::Approx(2.0 / 254.0));
    CHECK(spec.offset[1] == doctest::Approx(0.0).epsilon(1e-6));
    const auto store = VectorStore::quantize(rows, QuantMode::int8_per_dim);
    CHECK(store.codes() == std::vector<std::int8_t>{0, -127, 0, 0, 0, 127});
    const std::vector<float> q = {2, 3};
    const auto pq = store.prepare(q);
    for (size_t r = 0; r < 3; ++r) {
        const auto deq = store.dequantize_row(r);
        CHECK(store.score(pq, r) == doctest::Approx(2 * deq[0] + 3 * deq[1]).epsilon(1e-5));
    }
    CHECK_THROWS_AS(VectorStore(spec, 3, 2, std::vector<std::int8_t>(5)), Error);
}

TEST_CASE("hnsw validates parameters and inputs") {
    const Matrix rows = synthetic::unit_vectors(20, 8, 1);
    HnswParams p;
    p.m = 2;
    CHECK_THROWS_AS(build_hnsw(rows, iota_ids(20), p), Error);
    p = {};
    p.ef_construction = 8;
    CHECK_THROWS_AS(build_hnsw(rows, iota_ids(20), p), Error);
    CHECK_THROWS_AS(build_hnsw(rows, iota_ids(19), HnswParams{}), Error);
    Matrix scaled = rows;
    for (float& x : scaled.row(4)) x *= 2.0f;
    try {
        build_hnsw(scaled, iota_ids(20), HnswParams{});
        FAIL("non-unit row accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::precondition);
    }
    const auto index = build_hnsw(rows, iota_ids(20), HnswParams{});
    CHECK_THROWS_AS(index.search(rows.row(0), 33), Error);
    CHECK(index.search(rows.row(0), 33, 40).size() == 20);
    CHECK(build_hnsw(Matrix(0, 8), {}, HnswParams{}).search(rows.row(0), 1).empty());
}

TEST_CASE("hnsw graph invariants") {
    const Matrix rows = synthetic::unit_vectors(3000, 16, 5);
    HnswParams p;
    p.m = 8;
    p.ef_construction = 40;
    const auto index = build_hnsw(rows, iota_ids(3000, 100), p);
    CHECK(index.reachable_on_layer0() == 3000);
    CHECK(index.node_level(index.entry_point()) == index.max_level());
    for (size_t node = 0; node < index.size(); ++node) {
        CHECK(index.node_level(node) <= index.max_level());
        for (size_t layer = 0; layer <= index.node_level(node); ++layer) {
            const auto nb = index.neighbors(node, layer);
            CHECK(nb.size() <= index.capacity(layer));
            std::set<std::uint32_t> seen;
            for (auto n : nb) {
                CHECK(n != node);
                CHECK(n < index.size());
                CHECK(index.node_level(n) >= layer);
                CHECK(seen.insert(n).second);
            }
        }
    }
}

TEST_CASE("hnsw is deterministic and searches exactly on tiny sets") {
    const Matrix rows = synthetic::unit_vectors(500, 16, 9);
    const auto a = build_hnsw(rows, iota_ids(500), HnswParams{});
    const auto b = build_hnsw(rows, iota_ids(500), HnswParams{});
    CHECK(a.serialize() == b.serialize());
    HnswParams other;
    other.seed = 1;
    CHECK(build_hnsw(rows, iota_ids(500), other).serialize() != a.serialize());

    // With ef >= n the search is exhaustive over a connected graph.
    const Matrix small = synthetic::unit_vectors(40, 8, 2);
    const auto idx = build_hnsw(small, iota_ids(40), HnswParams{});
    const Matrix qs = synthetic::unit_vectors(30, 8, 3);
    for (size_t i = 0; i < qs.rows(); ++i) {
        CHECK(idx.search(qs.row(i), 5, 64) == brute_force(small, iota_ids(40), qs.row(i), 5));
    }
}

TEST_CASE("hnsw recall on clustered data") {
    // Queries share the cluster centres with the stored rows.
    const Matrix all = synthetic::clustered_unit_vectors(8200, 32, 64, 0.05f, 21);
    const Matrix rows(8000, 32, {all.data().begin(), all.data().begin() + 8000 * 32});
    const Matrix qs(200, 32, {all.data().begin() + 8000 * 32, all.data().end()});
    const auto ids = iota_ids(8000);
    for (QuantMode mode : {QuantMode::none, QuantMode::int8_per_dim}) {
        const auto flat = build_flat(rows, ids, mode);
        const auto index = build_hnsw(rows, ids, HnswParams{}, mode);
        double r1 = 0, r10 = 0;
        for (size_t i = 0; i < qs.rows(); ++i) {
            const auto exact = flat.search(qs.row(i), 10);
            const auto got = index.search(qs.row(i), 10);
            r1 += recall_at(got, exact, 1);
            r10 += recall_at(got, exact, 10);
        }
        CHECK(r1 / qs.rows() >= 0.95);
        CHECK(r10 / qs.rows() >= 0.90);
    }
}

TEST_CASE("index files round trip and reject corruption") {
    TempDir dir;
    const Matrix rows = synthetic::unit_vectors(300, 16, 4);
    const auto ids = iota_ids(300, 7);
    const Matrix qs = synthetic::unit_vectors(20, 16, 5);
    std::vector<std::unique_ptr<VectorIndex>> built;
    built.push_back(std::make_unique<FlatIndex>(build_flat(rows, ids)));
    built.push_back(std::make_unique<FlatIndex>(build_flat(rows, ids, QuantMode::int8_per_dim)));
    built.push_back(std::make_unique<HnswIndex>(build_hnsw(rows, ids, HnswParams{})));
    built.push_back(
        std::make_unique<HnswIndex>(build_hnsw(rows, ids, HnswParams{}, QuantMode::int8_per_dim)));
    for (const auto& index : built) {
        save_index(*index, dir / "i.paqi");
        const auto bytes = read_file(dir / "i.paqi");
        CHECK(bytes.substr(0, 4) == "PAQI");
        const auto loaded = load_index(dir / "i.paqi");
        CHECK(loaded->kind() == index->kind());
        CHECK(loaded->serialize() == bytes);
        for (size_t i = 0; i < qs.rows(); ++i) {
            CHECK(loaded->search(qs.row(i), 5) == index->search(qs.row(i), 5));
        }
        auto code_of = [](std::string_view b) {
            try {
                deserialize_index(b);
            } catch (const Error& e) {
                return e.code();
            }
            return ErrorCode::generic;
        };
        CHECK(code_of("XXXX" + bytes.substr(4)) == ErrorCode::bad_magic);
        CHECK(code_of(bytes.substr(0, bytes.size() - 3)) == ErrorCode::truncated);
        CHECK(code_of(bytes + "z") == ErrorCode::malformed);
        std::string v = bytes;
        v[4] = 9;
        CHECK(code_of(v) == ErrorCode::bad_version);
    }
    CHECK_THROWS_AS(load_index(dir / "missing.paqi"), Error);
}

TEST_CASE("build_index dispatches on kind") {
    const Matrix rows = synthetic::unit_vectors(50, 8, 4);
    IndexBuildSpec spec;
    spec.kind = IndexKind::flat;
    CHECK(build_index(rows, iota_ids(50), spec)->kind() == IndexKind::flat);
    spec.kind = IndexKind::hnsw;
    spec.quant = QuantMode::int8_per_dim;
    const auto idx = build_index(rows, iota_ids(50), spec);
    CHECK(idx->kind() == IndexKind::hnsw);
    CHECK(idx->store().mode() == QuantMode::int8_per_dim);
}
