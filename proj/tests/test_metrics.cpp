#include <gtest/gtest.h>

#include <cmath>

#include "tabattack/metrics.hpp"
#include "tabattack/rng.hpp"

using namespace tabattack;

namespace {

// literal O(n^2) pairwise oracle with half-credit ties
double auc_oracle(const std::vector<int>& y, const std::vector<double>& s) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] != 0) continue;
            den += 1.0;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    return num / den;
}

TEST(Auc, HandComputedFixture) {
    const std::vector<int> y = {0, 0, 1, 1};
    const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    EXPECT_NEAR(auc_pairwise(y, s), 0.75, 1e-12);
    EXPECT_NEAR(auc_trapezoid(y, s), 0.75, 1e-12);
    EXPECT_NEAR(auc_oracle(y, s), 0.75, 1e-12);
}

TEST(Auc, PerfectAndRandomAndTied) {
    const std::vector<int> y = {0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(auc_pairwise(y, {0.1, 0.2, 0.8, 0.9}), 1.0);
    EXPECT_DOUBLE_EQ(auc_pairwise(y, {0.5, 0.5, 0.5, 0.5}), 0.5);
    EXPECT_TRUE(std::isnan(auc_pairwise({1, 1}, {0.1, 0.2})));
}

TEST(Auc, TwoImplementationsAgreeOnRandomFixtures) {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 2 + rng.uniform_int(200);
        std::vector<int> y(n);
        std::vector<double> s(n);
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng.uniform_int(2));
            has0 |= y[i] == 0;
            has1 |= y[i] == 1;
            // coarse grid so ties actually happen
            s[i] = static_cast<double>(rng.uniform_int(10)) / 10.0;
        }
        if (!has0 || !has1) continue;
        const double a = auc_pairwise(y, s);
        const double b = auc_trapezoid(y, s);
        EXPECT_NEAR(a, b, 1e-9);
        EXPECT_NEAR(a, auc_oracle(y, s), 1e-9);
    }
}

TEST(Metrics, ClosedFormF1AndAccuracy) {
    // TP=2, FP=1, FN=1, TN=1 => F1 = 2/3
    const std::vector<int> y = {1, 1, 0, 1, 0};
    const std::vector<double> s = {0.9, 0.8, 0.7, 0.2, 0.1};
    const MetricsBundle m = classification_metrics(y, s);
    EXPECT_EQ(m.tp, 2u);
    EXPECT_EQ(m.fp, 1u);
    EXPECT_EQ(m.fn, 1u);
    EXPECT_EQ(m.tn, 1u);
    EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.accuracy, 0.6, 1e-12);
    EXPECT_EQ(m.tp + m.fp + m.tn + m.fn, y.size());
}

TEST(Metrics, ThresholdTiePredictsPositive) {
    const MetricsBundle m = classification_metrics({1, 0}, {0.5, 0.4});
    EXPECT_EQ(m.tp, 1u);
    EXPECT_EQ(m.fp, 0u);
}

TEST(Metrics, OrderInvariance) {
    const std::vector<int> y = {0, 1, 1, 0, 1, 0, 0, 1};
    const std::vector<double> s = {0.2, 0.7, 0.6, 0.3, 0.9, 0.5, 0.15, 0.55};
    const MetricsBundle a = classification_metrics(y, s);
    std::vector<int> yp(y.rbegin(), y.rend());
    std::vector<double> sp(s.rbegin(), s.rend());
    const MetricsBundle b = classification_metrics(yp, sp);
    EXPECT_DOUBLE_EQ(a.auc, b.auc);
    EXPECT_DOUBLE_EQ(a.f1, b.f1);
    EXPECT_DOUBLE_EQ(a.accuracy, b.accuracy);
}

TEST(Metrics, F1ChangesWhenClassesSwapOnAsymmetricFixture) {
    const std::vector<int> y = {1, 1, 0, 1, 0};
    const std::vector<double> s = {0.9, 0.8, 0.7, 0.2, 0.1};
    const MetricsBundle orig = classification_metrics(y, s);
    std::vector<int> y_swapped;
    std::vector<double> s_swapped;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y_swapped.push_back(1 - y[i]);
        s_swapped.push_back(1.0 - s[i]);
    }
    const MetricsBundle sw = classification_metrics(y_swapped, s_swapped);
    EXPECT_NE(orig.f1, sw.f1);
    EXPECT_DOUBLE_EQ(orig.accuracy, sw.accuracy);
}

TEST(Metrics, EmptyInputAndSingleClass) {
    EXPECT_THROW(classification_metrics({}, {}), DataError);
    const MetricsBundle m = classification_metrics({1, 1}, {0.8, 0.9});
    EXPECT_FALSE(m.auc_defined);
}

TEST(DeltaSummary, SmallFixtures) {
    const DeltaSummary one = summarize_deltas({0.6});
    EXPECT_DOUBLE_EQ(one.mean, 0.6);
    EXPECT_DOUBLE_EQ(one.median, 0.6);

    const DeltaSummary two = summarize_deltas({0.2, 0.4});
    EXPECT_NEAR(two.mean, 0.3, 1e-12);
    EXPECT_NEAR(two.median, 0.3, 1e-12);
    EXPECT_DOUBLE_EQ(two.min, 0.2);
    EXPECT_DOUBLE_EQ(two.max, 0.4);

    const DeltaSummary zeros = summarize_deltas({0.0, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(zeros.mean, 0.0);
    EXPECT_EQ(zeros.histogram[0], 3u);
}

TEST(DeltaSummary, HistogramCountsConserved) {
    Rng rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 1 + rng.uniform_int(500);
        std::vector<double> d(n);
        for (double& v : d) v = rng.uniform();
        const DeltaSummary s = summarize_deltas(d);
        std::uint64_t total = 0;
        for (std::uint64_t c : s.histogram) total += c;
        EXPECT_EQ(total, n);
        EXPECT_LE(s.q1, s.median);
        EXPECT_LE(s.median, s.q3);
    }
    // value exactly 1.0 lands in the last bin
    const DeltaSummary edge = summarize_deltas({1.0});
    EXPECT_EQ(edge.histogram[19], 1u);
}

TEST(ReliabilityGate, InclusiveBoundary) {
    EXPECT_TRUE(reliability_gate(0.76));
    EXPECT_TRUE(reliability_gate(0.75));
    EXPECT_FALSE(reliability_gate(0.60));
    EXPECT_THROW(reliability_gate(1.5), DataError);
}

}  // namespace
