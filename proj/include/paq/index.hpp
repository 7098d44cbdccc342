#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paq/matrix.hpp"

namespace paq {

struct Hit {
    std::int64_t id = 0;
    float score = 0.0f;

    bool operator==(const Hit&) const = default;
};

// Score descending, then id ascending.
inline bool hit_before(const Hit& a, const Hit& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.id < b.id;
}

enum class QuantMode : std::uint8_t { none = 0, int8_per_dim = 1 };

// Per-dimension affine int8 code: value = offset[d] + scale[d] * code, code in
// [-127, 127]. A constant dimension gets scale 1 and offset equal to the value.
struct QuantizationSpec {
    QuantMode mode = QuantMode::none;
    std::vector<float> scale;
    std::vector<float> offset;

    bool operator==(const QuantizationSpec&) const = default;
};

QuantizationSpec fit_int8(const Matrix& vectors);

// Query rewritten for a store so a score is bias + <weights, row>.
struct PreparedQuery {
    std::vector<float> weights;
    float bias = 0.0f;
};

// Row storage for an index, either raw fp32 or int8 codes.
class VectorStore {
public:
    VectorStore() = default;
    explicit VectorStore(Matrix fp32);
    VectorStore(QuantizationSpec spec, size_t count, size_t dim, std::vector<std::int8_t> codes);

    static VectorStore quantize(const Matrix& vectors, QuantMode mode);

    size_t size() const noexcept { return count_; }
    size_t dim() const noexcept { return dim_; }
    QuantMode mode() const noexcept { return quant_.mode; }
    const QuantizationSpec& quantization() const noexcept { return quant_; }
    const Matrix& fp32() const noexcept { return fp32_; }
    const std::vector<std::int8_t>& codes() const noexcept { return codes_; }

    PreparedQuery prepare(std::span<const float> query) const;
    float score(const PreparedQuery& q, size_t row) const {
        if (quant_.mode == QuantMode::none) {
            return dot(q.weights.data(), fp32_.data().data() + row * dim_, dim_);
        }
        return q.bias + dot_codes(q.weights.data(), codes_.data() + row * dim_, dim_);
    }

    const void* row_address(size_t row) const {
        if (quant_.mode == QuantMode::none) {
            return fp32_.data().data() + row * dim_;
        }
        return codes_.data() + row * dim_;
    }

    std::vector<float> dequantize_row(size_t row) const;
    Matrix dequantize() const;

    // Payload bytes plus quantization parameters.
    size_t memory_bytes() const;

    bool operator==(const VectorStore&) const = default;

private:
    static float dot_codes(const float* w, const std::int8_t* c, size_t n) {
        float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            for (size_t l = 0; l < 8; ++l) {
                acc[l] += w[j + l] * static_cast<float>(c[j + l]);
            }
        }
        float tail = 0.0f;
        for (; j < n; ++j) {
            tail += w[j] * static_cast<float>(c[j]);
        }
        return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
               tail;
    }

    size_t count_ = 0;
    size_t dim_ = 0;
    QuantizationSpec quant_;
    Matrix fp32_;
    std::vector<std::int8_t> codes_;
};

enum class IndexKind : std::uint8_t { flat = 0, hnsw = 1 };

class VectorIndex {
public:
    virtual ~VectorIndex() = default;
    virtual IndexKind kind() const = 0;
    virtual size_t size() const = 0;
    virtual size_t dim() const = 0;
    // Top-k by inner product: score descending, ties by ascending id.
    virtual std::vector<Hit> search(std::span<const float> query, size_t k) const = 0;
    virtual const VectorStore& store() const = 0;
    virtual const std::vector<std::int64_t>& ids() const = 0;
    // Bytes a serialized copy occupies.
    virtual std::string serialize() const = 0;
};

// Exhaustive scan; the exactness oracle for approximate search.
class FlatIndex final : public VectorIndex {
public:
    FlatIndex() = default;
    FlatIndex(VectorStore store, std::vector<std::int64_t> ids);

    IndexKind kind() const override { return IndexKind::flat; }
    size_t size() const override { return store_.size(); }
    size_t dim() const override { return store_.dim(); }
    std::vector<Hit> search(std::span<const float> query, size_t k) const override;
    const VectorStore& store() const override { return store_; }
    const std::vector<std::int64_t>& ids() const override { return ids_; }
    std::string serialize() const override;

private:
    VectorStore store_;
    std::vector<std::int64_t> ids_;
};

FlatIndex build_flat(const Matrix& vectors, std::vector<std::int64_t> ids,
                     QuantMode quant = QuantMode::none);

struct HnswParams {
    // Out-degree base: upper layers hold up to m links, layer 0 up to 2m.
    size_t m = 32;
    size_t ef_construction = 80;
    size_t ef_search = 32;
    std::uint64_t seed = 0;

    bool operator==(const HnswParams&) const = default;
};

void validate_params(const HnswParams& params);

class HnswIndex final : public VectorIndex {
public:
    HnswIndex() = default;

    IndexKind kind() const override { return IndexKind::hnsw; }
    size_t size() const override { return store_.size(); }
    size_t dim() const override { return store_.dim(); }
    std::vector<Hit> search(std::span<const float> query, size_t k) const override {
        return search(query, k, std::nullopt);
    }
    std::vector<Hit> search(std::span<const float> query, size_t k,
                            std::optional<size_t> ef_search) const;
    const VectorStore& store() const override { return store_; }
    const std::vector<std::int64_t>& ids() const override { return ids_; }
    std::string serialize() const override;

    const HnswParams& params() const noexcept { return params_; }
    size_t max_level() const noexcept { return max_level_; }
    std::uint32_t entry_point() const noexcept { return entry_; }
    size_t node_level(size_t node) const { return levels_[node]; }
    std::span<const std::uint32_t> neighbors(size_t node, size_t layer) const;
    size_t capacity(size_t layer) const { return layer == 0 ? 2 * params_.m : params_.m; }

    // Number of nodes reachable from the entry point over layer-0 links.
    size_t reachable_on_layer0() const;

private:
    friend class HnswBuilder;
    friend HnswIndex build_hnsw(const Matrix&, std::vector<std::int64_t>, const HnswParams&,
                                QuantMode);
    friend std::unique_ptr<VectorIndex> deserialize_index(std::string_view, const std::string&);

    struct VisitedPool;
    void init_visited();

    HnswParams params_;
    VectorStore store_;
    std::vector<std::int64_t> ids_;
    std::vector<std::uint8_t> levels_;
    // Layer 0: per node [count, n_1 .. n_cap0].
    std::vector<std::uint32_t> links0_;
    // Layers >= 1: per node, (level) blocks of [count, n_1 .. n_m].
    std::vector<std::vector<std::uint32_t>> upper_;
    std::uint32_t entry_ = 0;
    size_t max_level_ = 0;
    std::shared_ptr<VisitedPool> visited_;
};

// Deterministic single-threaded build. Rows must be unit norm (within 1e-3).
// The graph is built from the fp32 rows; `quant` only changes what is stored.
HnswIndex build_hnsw(const Matrix& vectors, std::vector<std::int64_t> ids,
                     const HnswParams& params, QuantMode quant = QuantMode::none);

struct IndexBuildSpec {
    IndexKind kind = IndexKind::hnsw;
    HnswParams hnsw;
    QuantMode quant = QuantMode::none;
};

std::unique_ptr<VectorIndex> build_index(const Matrix& vectors, std::vector<std::int64_t> ids,
                                         const IndexBuildSpec& spec);

inline constexpr std::uint16_t kIndexFileVersion = 1;

void save_index(const VectorIndex& index, const std::filesystem::path& path);
std::unique_ptr<VectorIndex> load_index(const std::filesystem::path& path);
std::unique_ptr<VectorIndex> deserialize_index(std::string_view bytes,
                                               const std::string& what = "index");

}  // namespace paq
