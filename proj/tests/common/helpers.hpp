#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "paq/index.hpp"
#include "paq/kb.hpp"
#include "paq/matrix.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() /
                ("paq_test_" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline paq::QAPair pair(std::int64_t id, std::string q, std::string a, double score = 1.0) {
    paq::QAPair p;
    p.id = id;
    p.question = std::move(q);
    p.answer = std::move(a);
    p.score = score;
    return p;
}

inline std::vector<std::int64_t> iota_ids(size_t n, std::int64_t start = 0) {
    std::vector<std::int64_t> ids(n);
    for (size_t i = 0; i < n; ++i) {
        ids[i] = start + static_cast<std::int64_t>(i);
    }
    return ids;
}

// Plain double-precision brute force: score every row, sort by score desc
// then id asc, keep k.
inline std::vector<paq::Hit> brute_force(const paq::Matrix& rows,
                                         const std::vector<std::int64_t>& ids,
                                         std::span<const float> q, size_t k) {
    std::vector<paq::Hit> all;
    for (size_t i = 0; i < rows.rows(); ++i) {
        all.push_back({ids[i], paq::dot(rows.row(i), q)});
    }
    std::sort(all.begin(), all.end(), [](const paq::Hit& a, const paq::Hit& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

inline double recall_at(const std::vector<paq::Hit>& approx, const std::vector<paq::Hit>& exact,
                        size_t k) {
    size_t hit = 0;
    for (size_t i = 0; i < std::min(k, exact.size()); ++i) {
        for (size_t j = 0; j < std::min(k, approx.size()); ++j) {
            if (approx[j].id == exact[i].id) {
                ++hit;
                break;
            }
        }
    }
    return static_cast<double>(hit) / static_cast<double>(std::min(k, exact.size()));
}

}  // namespace testing
