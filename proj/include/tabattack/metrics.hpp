#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "tabattack/common.hpp"

namespace tabattack {

struct MetricsBundle {
    double accuracy = 0.0;
    double f1 = 0.0;
    double auc = std::numeric_limits<double>::quiet_NaN();
    bool auc_defined = false;
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// AUC as the probability that a random positive outscores a random negative,
/// ties counting 1/2 (Mann-Whitney). Computed via average ranks. NaN when one
/// class is absent.
inline double auc_pairwise(const std::vector<int>& y_true, const std::vector<double>& scores) {
    const std::size_t n = y_true.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::size_t n_pos = 0;
    for (int y : y_true) n_pos += (y == 1);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (y_true[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// AUC as the trapezoidal area under the ROC curve, grouping tied scores so
/// the result matches the pairwise definition exactly. Cross-checks
/// auc_pairwise in the test suite.
inline double auc_trapezoid(const std::vector<int>& y_true, const std::vector<double>& scores) {
    const std::size_t n = y_true.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double n_pos = 0.0, n_neg = 0.0;
    for (int y : y_true) (y == 1 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0.0 || n_neg == 0.0) return std::numeric_limits<double>::quiet_NaN();

    double area = 0.0, tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double d_tp = 0.0, d_fp = 0.0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (y_true[order[j]] == 1 ? d_tp : d_fp) += 1.0;
            ++j;
        }
        area += d_fp * (tp + 0.5 * d_tp);
        tp += d_tp;
        fp += d_fp;
        i = j;
    }
    return area / (n_pos * n_neg);
}

/// Accuracy, F1 and AUC at a probability threshold (default 0.5; a score
/// exactly at the threshold predicts class 1, matching the classifier tie
/// rule). Single-class inputs leave AUC flagged undefined.
inline MetricsBundle classification_metrics(const std::vector<int>& y_true,
                                            const std::vector<double>& p1_scores,
                                            double threshold = 0.5) {
    if (y_true.empty()) throw DataError("classification_metrics: empty input");
    if (y_true.size() != p1_scores.size())
        throw DataError("classification_metrics: length mismatch");
    for (double s : p1_scores)
        if (!(s >= 0.0 && s <= 1.0))
            throw DataError("classification_metrics: score outside [0,1]");

    MetricsBundle m;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int pred = p1_scores[i] >= threshold ? 1 : 0;
        if (pred == 1 && y_true[i] == 1) ++m.tp;
        else if (pred == 1 && y_true[i] == 0) ++m.fp;
        else if (pred == 0 && y_true[i] == 0) ++m.tn;
        else ++m.fn;
    }
    const double n = static_cast<double>(y_true.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    const double f1_den = static_cast<double>(2 * m.tp + m.fp + m.fn);
    m.f1 = f1_den > 0.0 ? 2.0 * static_cast<double>(m.tp) / f1_den : 0.0;
    m.auc = auc_pairwise(y_true, p1_scores);
    m.auc_defined = !std::isnan(m.auc);
    return m;
}

/// Distribution summary used for the probability-delta analysis: moments,
/// quartiles (linear interpolation between closest ranks) and a fixed
/// 20-bin histogram over [0,1].
struct DeltaSummary {
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::array<std::uint64_t, 20> histogram{};
    std::size_t count = 0;
};

inline DeltaSummary summarize_deltas(std::vector<double> deltas) {
    if (deltas.empty()) throw DataError("summarize_deltas: empty input");
    DeltaSummary s;
    s.count = deltas.size();
    std::sort(deltas.begin(), deltas.end());
    const std::size_t n = deltas.size();
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(n - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, n - 1);
        const double frac = pos - static_cast<double>(lo);
        return deltas[lo] + frac * (deltas[hi] - deltas[lo]);
    };
    s.mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(n);
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.min = deltas.front();
    s.max = deltas.back();
    for (double d : deltas) {
        int bin = static_cast<int>(d * 20.0);
        bin = std::clamp(bin, 0, 19);
        ++s.histogram[static_cast<std::size_t>(bin)];
    }
    return s;
}

/// Inclusive reliability gate on test AUC: explanations from a model below
/// the threshold are treated as unreliable.
inline bool reliability_gate(double test_auc, double threshold = 0.75) {
    if (!(test_auc >= 0.0 && test_auc <= 1.0))
        throw DataError("reliability_gate: AUC outside [0,1]");
    return test_auc >= threshold;
}

}  // namespace tabattack
