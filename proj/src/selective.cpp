#include "paq/selective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "paq/error.hpp"
#include "paq/jsonl.hpp"

namespace paq {

namespace {

std::vector<size_t> confidence_order(std::span<const ScoredPrediction> preds) {
    std::vector<size_t> order(preds.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (preds[a].confidence != preds[b].confidence) {
            return preds[a].confidence > preds[b].confidence;
        }
        return preds[a].question_id < preds[b].question_id;
    });
    return order;
}

void check_finite(std::span<const ScoredPrediction> preds) {
    for (const auto& p : preds) {
        if (!std::isfinite(p.confidence)) {
            throw_usage("confidence for question " + std::to_string(p.question_id) +
                        " is not finite");
        }
    }
}

}  // namespace

std::vector<RiskCoveragePoint> risk_coverage(std::span<const ScoredPrediction> preds) {
    if (preds.empty()) {
        throw_usage("risk_coverage needs at least one prediction", ErrorCode::empty_input);
    }
    check_finite(preds);
    const auto order = confidence_order(preds);
    const double total = static_cast<double>(preds.size());
    std::vector<RiskCoveragePoint> points;
    points.reserve(preds.size());
    size_t correct = 0;
    for (size_t n = 1; n <= order.size(); ++n) {
        const auto& p = preds[order[n - 1]];
        correct += p.correct ? 1 : 0;
        points.push_back({p.confidence, static_cast<double>(n) / total,
                          static_cast<double>(correct) / static_cast<double>(n)});
    }
    return points;
}

double threshold_for_coverage(std::span<const double> dev_confidences, double target_coverage) {
    if (dev_confidences.empty()) {
        throw_usage("threshold_for_coverage needs dev confidences", ErrorCode::empty_input);
    }
    if (!(target_coverage > 0.0 && target_coverage <= 1.0)) {
        throw_usage("target coverage must be in (0, 1]");
    }
    std::vector<double> sorted(dev_confidences.begin(), dev_confidences.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double n_total = static_cast<double>(sorted.size());
    // Smallest n with n / N >= target.
    size_t n = static_cast<size_t>(std::ceil(target_coverage * n_total - 1e-9));
    n = std::clamp<size_t>(n, 1, sorted.size());
    while (n > 1 && static_cast<double>(n - 1) / n_total >= target_coverage) {
        --n;
    }
    while (static_cast<double>(n) / n_total < target_coverage && n < sorted.size()) {
        ++n;
    }
    return sorted[n - 1];
}

double select_backoff_threshold(std::span<const ScoredPrediction> dev_fast,
                                const std::vector<bool>& dev_slow_correct) {
    if (dev_fast.size() != dev_slow_correct.size()) {
        throw_usage("fast and slow dev lists differ in length (" +
                    std::to_string(dev_fast.size()) + " vs " +
                    std::to_string(dev_slow_correct.size()) + ")");
    }
    check_finite(dev_fast);
    const double inf = std::numeric_limits<double>::infinity();
    if (dev_fast.empty()) {
        return inf;
    }
    const auto order = confidence_order(dev_fast);
    // Start by deferring everything, then admit questions in confidence order;
    // a cut is only valid between distinct confidence values.
    long correct = 0;
    for (bool s : dev_slow_correct) {
        correct += s ? 1 : 0;
    }
    long best = correct;
    double best_t = inf;
    size_t i = 0;
    while (i < order.size()) {
        const double c = dev_fast[order[i]].confidence;
        while (i < order.size() && dev_fast[order[i]].confidence == c) {
            correct += (dev_fast[order[i]].correct ? 1 : 0) - (dev_slow_correct[order[i]] ? 1 : 0);
            ++i;
        }
        if (correct >= best) {
            best = correct;
            best_t = c;
        }
    }
    return best_t;
}

std::string_view to_string(Route route) {
    return route == Route::fast ? "fast" : "fallback";
}

std::pair<AnswerPrediction, BackoffDecision> route(std::int64_t question_id,
                                                   std::string_view question,
                                                   const AnswerFn& fast, const AnswerFn& fallback,
                                                   double threshold) {
    AnswerPrediction pred = fast(question);
    BackoffDecision decision;
    decision.question_id = question_id;
    if (pred.confidence >= threshold) {
        decision.routed_to = Route::fast;
    } else {
        pred = fallback(question);
        pred.source = AnswerSource::fallback;
        decision.routed_to = Route::fallback;
    }
    decision.final_answer = pred.answer;
    return {std::move(pred), std::move(decision)};
}

SpeedReport combined_speed(double coverage, double t_fast, double t_slow) {
    if (!(t_fast > 0.0 && t_slow > 0.0)) {
        throw_usage("per-question times must be positive");
    }
    if (!(coverage >= 0.0 && coverage <= 1.0)) {
        throw_usage("coverage must be in [0, 1]");
    }
    SpeedReport r;
    r.time_per_q = t_fast + (1.0 - coverage) * t_slow;
    r.speedup_vs_slow = t_slow / r.time_per_q;
    return r;
}

std::vector<ScoredPrediction> load_scored_predictions(const std::filesystem::path& path) {
    std::vector<ScoredPrediction> out;
    for_each_jsonl(path, [&](size_t line, const nlohmann::json& j) {
        try {
            ScoredPrediction p;
            p.question_id = j.at("question_id").get<std::int64_t>();
            p.confidence = j.at("confidence").get<double>();
            p.correct = j.at("correct").get<bool>();
            if (j.contains("latency_s") && !j["latency_s"].is_null()) {
                p.latency_s = j["latency_s"].get<double>();
            }
            if (!std::isfinite(p.confidence)) {
                throw_domain("confidence is not finite", ErrorCode::malformed);
            }
            out.push_back(p);
        } catch (const nlohmann::json::exception& e) {
            throw_domain(path.string() + ":" + std::to_string(line) + ": " + e.what(),
                         ErrorCode::malformed);
        }
    });
    return out;
}

std::string serialize_scored_predictions(std::span<const ScoredPrediction> preds) {
    std::string out;
    for (const auto& p : preds) {
        ordered_json j;
        j["question_id"] = p.question_id;
        j["confidence"] = p.confidence;
        j["correct"] = p.correct;
        j["latency_s"] = p.latency_s ? ordered_json(*p.latency_s) : ordered_json(nullptr);
        out += dump_line(j);
        out.push_back('\n');
    }
    return out;
}

std::string risk_coverage_tsv(std::span<const RiskCoveragePoint> points) {
    std::ostringstream out;
    out.precision(10);
    out << "threshold\tcoverage\taccuracy\n";
    for (const auto& p : points) {
        out << p.threshold << '\t' << p.coverage << '\t' << p.accuracy << '\n';
    }
    return out.str();
}

}  // namespace paq
