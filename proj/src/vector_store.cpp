#include "paq/index.hpp"

#include <algorithm>
#include <cmath>

#include "paq/error.hpp"

namespace paq {

QuantizationSpec fit_int8(const Matrix& vectors) {
    const size_t dim = vectors.dim();
    QuantizationSpec spec;
    spec.mode = QuantMode::int8_per_dim;
    spec.scale.assign(dim, 1.0f);
    spec.offset.assign(dim, 0.0f);
    if (vectors.empty()) {
        return spec;
    }
    std::vector<float> lo(vectors.row(0).begin(), vectors.row(0).end());
    std::vector<float> hi = lo;
    for (size_t i = 1; i < vectors.rows(); ++i) {
        const auto r = vectors.row(i);
        for (size_t d = 0; d < dim; ++d) {
            lo[d] = std::min(lo[d], r[d]);
            hi[d] = std::max(hi[d], r[d]);
        }
    }
    for (size_t d = 0; d < dim; ++d) {
        if (hi[d] > lo[d]) {
            spec.scale[d] = (hi[d] - lo[d]) / 254.0f;
            spec.offset[d] = lo[d] + 127.0f * spec.scale[d];
        } else {
            spec.scale[d] = 1.0f;
            spec.offset[d] = lo[d];
        }
    }
    return spec;
}

VectorStore::VectorStore(Matrix fp32)
    : count_(fp32.rows()), dim_(fp32.dim()), fp32_(std::move(fp32)) {}

VectorStore::VectorStore(QuantizationSpec spec, size_t count, size_t dim,
                         std::vector<std::int8_t> codes)
    : count_(count), dim_(dim), quant_(std::move(spec)), codes_(std::move(codes)) {
    if (quant_.mode != QuantMode::int8_per_dim || quant_.scale.size() != dim ||
        quant_.offset.size() != dim || codes_.size() != count * dim) {
        throw_domain("inconsistent int8 vector store", ErrorCode::malformed);
    }
    for (float s : quant_.scale) {
        if (!(s > 0.0f) || !std::isfinite(s)) {
            throw_domain("int8 scales must be finite and strictly positive", ErrorCode::malformed);
        }
    }
}

VectorStore VectorStore::quantize(const Matrix& vectors, QuantMode mode) {
    if (mode == QuantMode::none) {
        return VectorStore(vectors);
    }
    QuantizationSpec spec = fit_int8(vectors);
    const size_t dim = vectors.dim();
    std::vector<std::int8_t> codes(vectors.rows() * dim);
    for (size_t i = 0; i < vectors.rows(); ++i) {
        const auto r = vectors.row(i);
        for (size_t d = 0; d < dim; ++d) {
            const float q = std::nearbyint((r[d] - spec.offset[d]) / spec.scale[d]);
            codes[i * dim + d] = static_cast<std::int8_t>(std::clamp(q, -127.0f, 127.0f));
        }
    }
    return VectorStore(std::move(spec), vectors.rows(), dim, std::move(codes));
}

PreparedQuery VectorStore::prepare(std::span<const float> query) const {
    if (query.size() != dim_) {
        throw_usage("query has dimension " + std::to_string(query.size()) +
                        " but the index has " + std::to_string(dim_),
                    ErrorCode::dim_mismatch);
    }
    PreparedQuery q;
    if (quant_.mode == QuantMode::none) {
        q.weights.assign(query.begin(), query.end());
        return q;
    }
    q.weights.resize(dim_);
    double bias = 0.0;
    for (size_t d = 0; d < dim_; ++d) {
        q.weights[d] = query[d] * quant_.scale[d];
        bias += static_cast<double>(query[d]) * quant_.offset[d];
    }
    q.bias = static_cast<float>(bias);
    return q;
}

std::vector<float> VectorStore::dequantize_row(size_t row) const {
    if (quant_.mode == QuantMode::none) {
        const auto r = fp32_.row(row);
        return {r.begin(), r.end()};
    }
    std::vector<float> out(dim_);
    for (size_t d = 0; d < dim_; ++d) {
        out[d] = quant_.offset[d] + quant_.scale[d] * static_cast<float>(codes_[row * dim_ + d]);
    }
    return out;
}

Matrix VectorStore::dequantize() const {
    if (quant_.mode == QuantMode::none) {
        return fp32_;
    }
    Matrix m(count_, dim_);
    for (size_t i = 0; i < count_; ++i) {
        const auto r = dequantize_row(i);
        std::copy(r.begin(), r.end(), m.row(i).begin());
    }
    return m;
}

size_t VectorStore::memory_bytes() const {
    if (quant_.mode == QuantMode::none) {
        return count_ * dim_ * sizeof(float);
    }
    return count_ * dim_ + 2 * dim_ * sizeof(float);
}

}  // namespace paq
