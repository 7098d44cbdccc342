#include <algorithm>

#include "paq/error.hpp"
#include "paq/index.hpp"

namespace paq {

FlatIndex::FlatIndex(VectorStore store, std::vector<std::int64_t> ids)
    : store_(std::move(store)), ids_(std::move(ids)) {
    if (ids_.size() != store_.size()) {
        throw_usage("flat index: " + std::to_string(store_.size()) + " vectors but " +
                        std::to_string(ids_.size()) + " ids",
                    ErrorCode::dim_mismatch);
    }
}

FlatIndex build_flat(const Matrix& vectors, std::vector<std::int64_t> ids, QuantMode quant) {
    return FlatIndex(VectorStore::quantize(vectors, quant), std::move(ids));
}

std::vector<Hit> FlatIndex::search(std::span<const float> query, size_t k) const {
    if (k == 0) {
        throw_usage("k must be at least 1");
    }
    const PreparedQuery q = store_.prepare(query);
    std::vector<Hit> hits(store_.size());
    for (size_t i = 0; i < hits.size(); ++i) {
        hits[i] = {ids_[i], store_.score(q, i)};
    }
    const size_t take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                      hit_before);
    hits.resize(take);
    return hits;
}

}  // namespace paq
