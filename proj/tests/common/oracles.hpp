#pragma once

// Slow, obviously-correct reference computations that the fast code paths
// are checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "paq/selective.hpp"

namespace testing {

// Full (n+1) x (m+1) LCS table.
inline size_t lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<size_t>> t(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
        }
    }
    return t[a.size()][b.size()];
}

// For each n, counts the correct answers among the n items ranked highest,
// where an item outranks another on higher confidence or equal confidence
// and smaller id. Ranks are found by counting, not sorting.
inline std::vector<paq::RiskCoveragePoint> risk_coverage_oracle(
    const std::vector<paq::ScoredPrediction>& preds) {
    const size_t n = preds.size();
    std::vector<size_t> rank(n, 0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            const auto& a = preds[j];
            const auto& b = preds[i];
            if (a.confidence > b.confidence ||
                (a.confidence == b.confidence && a.question_id < b.question_id)) {
                ++rank[i];
            }
        }
    }
    std::vector<paq::RiskCoveragePoint> out;
    for (size_t len = 1; len <= n; ++len) {
        size_t correct = 0;
        double threshold = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (rank[i] < len) correct += preds[i].correct;
            if (rank[i] == len - 1) threshold = preds[i].confidence;
        }
        out.push_back({threshold, static_cast<double>(len) / static_cast<double>(n),
                       static_cast<double>(correct) / static_cast<double>(len)});
    }
    return out;
}

// Tries every candidate cut (each distinct confidence and +inf) and scores
// the combined system directly.
inline double backoff_oracle(const std::vector<paq::ScoredPrediction>& fast,
                             const std::vector<bool>& slow_correct) {
    std::set<double> cuts;
    for (const auto& p : fast) cuts.insert(p.confidence);
    cuts.insert(std::numeric_limits<double>::infinity());
    double best_t = std::numeric_limits<double>::infinity();
    size_t best = 0;
    bool first = true;
    for (double t : cuts) {
        size_t score = 0;
        for (size_t i = 0; i < fast.size(); ++i) {
            score += fast[i].confidence >= t ? fast[i].correct : slow_correct[i];
        }
        if (first || score > best || (score == best && t < best_t)) {
            best = score;
            best_t = t;
            first = false;
        }
    }
    return best_t;
}

}  // namespace testing
