#pragma once

#include <cstddef>
#include <span>
#include <vector>

#if defined(__AVX2__) || defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace paq {

// Dense row-major count x dim matrix of fp32 values.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0f) {}
    Matrix(size_t rows, size_t dim, std::vector<float> data)
        : rows_(rows), dim_(dim), data_(std::move(data)) {}

    size_t rows() const noexcept { return rows_; }
    size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const float> row(size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<float> row(size_t i) { return {data_.data() + i * dim_, dim_}; }

    const std::vector<float>& data() const noexcept { return data_; }
    std::vector<float>& data() noexcept { return data_; }

    void append_row(std::span<const float> values) {
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    bool operator==(const Matrix&) const = default;

private:
    size_t rows_ = 0;
    size_t dim_ = 0;
    std::vector<float> data_;
};

inline float dot_scalar(const float* a, const float* b, size_t n) {
    float acc[32] = {};
    size_t j = 0;
    for (; j + 32 <= n; j += 32) {
        for (size_t l = 0; l < 32; ++l) {
            acc[l] += a[j + l] * b[j + l];
        }
    }
    for (; j + 8 <= n; j += 8) {
        for (size_t l = 0; l < 8; ++l) {
            acc[l] += a[j + l] * b[j + l];
        }
    }
    float tail = 0.0f;
    for (; j < n; ++j) {
        tail += a[j] * b[j];
    }
    for (size_t l = 0; l < 8; ++l) {
        acc[l] = (acc[l] + acc[l + 8]) + (acc[l + 16] + acc[l + 24]);
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
           tail;
}

#if defined(__AVX512F__)
inline float dot(const float* a, const float* b, size_t n) {
    __m512 s0 = _mm512_setzero_ps();
    __m512 s1 = _mm512_setzero_ps();
    size_t j = 0;
    for (; j + 32 <= n; j += 32) {
        s0 = _mm512_fmadd_ps(_mm512_loadu_ps(a + j), _mm512_loadu_ps(b + j), s0);
        s1 = _mm512_fmadd_ps(_mm512_loadu_ps(a + j + 16), _mm512_loadu_ps(b + j + 16), s1);
    }
    if (j + 16 <= n) {
        s0 = _mm512_fmadd_ps(_mm512_loadu_ps(a + j), _mm512_loadu_ps(b + j), s0);
        j += 16;
    }
    if (j < n) {
        const __mmask16 m = static_cast<__mmask16>((1u << (n - j)) - 1);
        s1 = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(m, a + j), _mm512_maskz_loadu_ps(m, b + j), s1);
    }
    return _mm512_reduce_add_ps(_mm512_add_ps(s0, s1));
}
#elif defined(__AVX2__) && defined(__FMA__)
inline float dot(const float* a, const float* b, size_t n) {
    __m256 s0 = _mm256_setzero_ps();
    __m256 s1 = _mm256_setzero_ps();
    size_t j = 0;
    for (; j + 16 <= n; j += 16) {
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + j), _mm256_loadu_ps(b + j), s0);
        s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + j + 8), _mm256_loadu_ps(b + j + 8), s1);
    }
    __m256 s = _mm256_add_ps(s0, s1);
    __m128 h = _mm_add_ps(_mm256_castps256_ps128(s), _mm256_extractf128_ps(s, 1));
    h = _mm_add_ps(h, _mm_movehl_ps(h, h));
    h = _mm_add_ss(h, _mm_movehdup_ps(h));
    float total = _mm_cvtss_f32(h);
    for (; j < n; ++j) {
        total += a[j] * b[j];
    }
    return total;
}
#else
inline float dot(const float* a, const float* b, size_t n) {
    return dot_scalar(a, b, n);
}
#endif

inline float dot(std::span<const float> a, std::span<const float> b) {
    return dot(a.data(), b.data(), a.size());
}

float l2_norm(std::span<const float> v);

}  // namespace paq
