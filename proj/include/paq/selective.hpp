#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paq/retrieve.hpp"

namespace paq {

struct ScoredPrediction {
    std::int64_t question_id = 0;
    double confidence = 0.0;
    bool correct = false;
    std::optional<double> latency_s;
};

struct RiskCoveragePoint {
    double threshold = 0.0;
    double coverage = 0.0;
    double accuracy = 0.0;
};

// One point per prefix of the confidence-sorted list (ties by question_id):
// coverage n/N and accuracy over the n most confident answers.
std::vector<RiskCoveragePoint> risk_coverage(std::span<const ScoredPrediction> preds);

// Largest t with fraction(confidence >= t) >= target_coverage.
double threshold_for_coverage(std::span<const double> dev_confidences, double target_coverage);

// Cut point maximizing combined accuracy when questions with confidence >= t
// keep the fast answer and the rest take the slow one. Scans every distinct
// confidence plus +inf (defer everything); ties go to the lower threshold.
double select_backoff_threshold(std::span<const ScoredPrediction> dev_fast,
                                const std::vector<bool>& dev_slow_correct);

enum class Route { fast, fallback };
std::string_view to_string(Route route);

struct BackoffDecision {
    std::int64_t question_id = 0;
    Route routed_to = Route::fast;
    std::string final_answer;
};

using AnswerFn = std::function<AnswerPrediction(std::string_view question)>;

// Asks the fast system first; the fallback is only called when the fast
// confidence is below the threshold.
std::pair<AnswerPrediction, BackoffDecision> route(std::int64_t question_id,
                                                   std::string_view question,
                                                   const AnswerFn& fast, const AnswerFn& fallback,
                                                   double threshold);

struct SpeedReport {
    double time_per_q = 0.0;
    double speedup_vs_slow = 0.0;
};

// Every question pays the fast attempt; deferred ones also pay the slow system.
SpeedReport combined_speed(double coverage, double t_fast, double t_slow);

std::vector<ScoredPrediction> load_scored_predictions(const std::filesystem::path& path);
std::string serialize_scored_predictions(std::span<const ScoredPrediction> preds);

// "threshold\tcoverage\taccuracy" rows under a header row.
std::string risk_coverage_tsv(std::span<const RiskCoveragePoint> points);

}  // namespace paq
