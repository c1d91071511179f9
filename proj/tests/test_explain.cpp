#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixture_models.hpp"
#include "tabattack/explain.hpp"

using namespace tabattack;
using tabattack::testing::ConstantModel;
using tabattack::testing::LinearProbModel;
using tabattack::testing::MonotoneModel;
using tabattack::testing::ThresholdModel;

namespace {

std::vector<std::vector<double>> zero_background(std::size_t d) {
    return {std::vector<double>(d, 0.0)};
}

// brute-force Shapley oracle: iterate subsets and average marginal
// contributions with explicit factorial weights
std::vector<double> shapley_oracle(const Classifier& clf, std::span<const double> x,
                                   const std::vector<std::vector<double>>& background) {
    const std::size_t n = x.size();
    auto value = [&](std::uint64_t mask) {
        double sum = 0.0;
        for (const auto& b : background) {
            std::vector<double> z(b);
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1ull << i)) z[i] = x[i];
            sum += clf.predict_proba(z).second;
        }
        return sum / static_cast<double>(background.size());
    };
    std::vector<double> fact(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> phi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
            if (mask & (1ull << i)) continue;
            std::size_t s = 0;
            for (std::size_t j = 0; j < n; ++j) s += (mask >> j) & 1ull;
            const double w = fact[s] * fact[n - 1 - s] / fact[n];
            phi[i] += w * (value(mask | (1ull << i)) - value(mask));
        }
    }
    return phi;
}

TEST(ExactShapley, LinearModelGivesWeightTimesValue) {
    const LinearProbModel clf({0.1, -0.2});
    const std::vector<double> x = {1.0, 1.0};
    const Explanation e = exact_shapley(clf, x, zero_background(2));
    EXPECT_NEAR(e.attributions[0], 0.1, 1e-12);
    EXPECT_NEAR(e.attributions[1], -0.2, 1e-12);
    EXPECT_NEAR(e.base_value, 0.5, 1e-12);

    const auto oracle = shapley_oracle(clf, x, zero_background(2));
    EXPECT_NEAR(e.attributions[0], oracle[0], 1e-12);
    EXPECT_NEAR(e.attributions[1], oracle[1], 1e-12);
}

TEST(ExactShapley, DummyFeatureGetsExactZero) {
    // the model never reads feature 1
    const ThresholdModel clf(3, 0, 0.5);
    const std::vector<double> x = {1.0, 42.0, -3.0};
    std::vector<std::vector<double>> bg = {{0.0, 1.0, 2.0}, {2.0, -1.0, 0.5}};
    const Explanation e = exact_shapley(clf, x, bg);
    EXPECT_EQ(e.attributions[1], 0.0);
    EXPECT_EQ(e.attributions[2], 0.0);
    EXPECT_NE(e.attributions[0], 0.0);
}

TEST(ExactShapley, EfficiencyHoldsOnRandomInstances) {
    const LinearProbModel clf({0.05, -0.12, 0.2, 0.07, -0.03, 0.09});
    Rng rng(15);
    std::vector<std::vector<double>> bg;
    for (int b = 0; b < 5; ++b) {
        std::vector<double> row(6);
        for (double& v : row) v = rng.normal() * 0.3;
        bg.push_back(row);
    }
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> x(6);
        for (double& v : x) v = rng.normal() * 0.4;
        const Explanation e = exact_shapley(clf, x, bg);
        double total = e.base_value;
        for (double a : e.attributions) total += a;
        EXPECT_NEAR(total, clf.predict_proba(x).second, 1e-6);
    }
}

TEST(ExactShapley, SymmetricFeaturesGetEqualAttributions) {
    const LinearProbModel clf({0.1, 0.1, -0.05});
    const std::vector<double> x = {0.7, 0.7, 0.2};
    const Explanation e = exact_shapley(clf, x, zero_background(3));
    EXPECT_NEAR(e.attributions[0], e.attributions[1], 1e-9);
}

TEST(ExactShapley, RejectsTooManyFeaturesAndEmptyBackground) {
    const ConstantModel clf(13);
    const std::vector<double> x(13, 0.0);
    EXPECT_THROW(exact_shapley(clf, x, zero_background(13)), ConfigError);
    const ConstantModel small(3);
    const std::vector<double> x3(3, 0.0);
    EXPECT_THROW(exact_shapley(small, x3, {}), DataError);
}

TEST(KernelShap, MatchesExactOnSixFeatureFixture) {
    const LinearProbModel clf({0.08, -0.11, 0.15, 0.05, -0.07, 0.1});
    Rng rng(5);
    std::vector<std::vector<double>> bg;
    for (int b = 0; b < 10; ++b) {
        std::vector<double> row(6);
        for (double& v : row) v = rng.normal() * 0.3;
        bg.push_back(row);
    }
    std::vector<double> x(6);
    for (double& v : x) v = rng.normal() * 0.5;

    const Explanation exact = exact_shapley(clf, x, bg);
    const Explanation approx = kernel_shap(clf, x, bg, 2000, 77);
    double max_err = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
        max_err = std::max(max_err, std::abs(exact.attributions[i] - approx.attributions[i]));
    EXPECT_LE(max_err, 0.05);
    EXPECT_NEAR(approx.base_value, exact.base_value, 1e-12);
}

TEST(KernelShap, TooFewCoalitionsErrors) {
    const ConstantModel clf(4);
    const std::vector<double> x(4, 0.0);
    EXPECT_THROW(kernel_shap(clf, x, zero_background(4), 1, 0), ConfigError);
    EXPECT_THROW(kernel_shap(clf, x, zero_background(4), 7, 0), ConfigError);
}

TEST(KernelShap, ConstantModelGetsZeroAttributions) {
    const ConstantModel clf(5);
    std::vector<double> x = {1, 2, 3, 4, 5};
    const Explanation e = kernel_shap(clf, x, zero_background(5), 100, 3);
    for (double a : e.attributions) EXPECT_LE(std::abs(a), 1e-9);
}

TEST(KernelShap, ErrorShrinksAsCoalitionsDouble) {
    const LinearProbModel clf({0.09, -0.13, 0.06, 0.11, -0.04, 0.08});
    Rng rng(21);
    std::vector<std::vector<double>> bg;
    for (int b = 0; b < 8; ++b) {
        std::vector<double> row(6);
        for (double& v : row) v = rng.normal() * 0.25;
        bg.push_back(row);
    }
    std::vector<double> x(6);
    for (double& v : x) v = rng.normal() * 0.5;
    const Explanation exact = exact_shapley(clf, x, bg);

    // median max-abs error over 20 seeds, n_coalitions doubling
    std::vector<double> medians;
    for (int m : {16, 32, 64, 128, 256}) {
        std::vector<double> errs;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Explanation approx = kernel_shap(clf, x, bg, m, seed);
            double err = 0.0;
            for (std::size_t i = 0; i < 6; ++i)
                err = std::max(err, std::abs(exact.attributions[i] - approx.attributions[i]));
            errs.push_back(err);
        }
        std::sort(errs.begin(), errs.end());
        medians.push_back(0.5 * (errs[9] + errs[10]));
    }
    for (std::size_t i = 1; i < medians.size(); ++i)
        EXPECT_LE(medians[i], medians[i - 1] + 1e-12)
            << "median error grew between " << i - 1 << " and " << i;
}

TEST(KernelShap, DeterministicForFixedSeed) {
    const LinearProbModel clf({0.1, -0.2, 0.05, 0.07});
    const std::vector<double> x = {0.5, 0.25, -0.4, 0.9};
    const Explanation a = kernel_shap(clf, x, zero_background(4), 64, 123);
    const Explanation b = kernel_shap(clf, x, zero_background(4), 64, 123);
    EXPECT_EQ(a.attributions, b.attributions);
}

FeatureStats unit_stats(std::size_t d) {
    FeatureStats fs;
    for (std::size_t j = 0; j < d; ++j) {
        fs.names.push_back("f" + std::to_string(j));
        fs.mean.push_back(0.0);
        fs.std.push_back(1.0);
    }
    return fs;
}

TEST(Lime, MonotoneFeatureDominatesAcrossSeeds) {
    const MonotoneModel clf(5, 3, 1.5);
    const std::vector<double> x = {0.0, 0.0, 0.0, 0.2, 0.0};
    const FeatureStats fs = unit_stats(5);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Explanation e = lime(clf, x, fs, 50, 0.0, seed);
        std::size_t best = 0;
        for (std::size_t j = 1; j < 5; ++j)
            if (std::abs(e.attributions[j]) > std::abs(e.attributions[best])) best = j;
        if (best == 3 && e.attributions[3] > 0.0) ++hits;
    }
    EXPECT_GE(hits, 95);
}

TEST(Lime, ConstantModelShrinksToZero) {
    const ConstantModel clf(4);
    const std::vector<double> x(4, 1.0);
    const Explanation e = lime(clf, x, unit_stats(4), 40, 0.0, 5);
    for (double a : e.attributions) EXPECT_LE(std::abs(a), 1e-6);
}

TEST(Lime, DegenerateInputsError) {
    const ConstantModel clf(3);
    const std::vector<double> x(3, 0.0);
    FeatureStats fs = unit_stats(3);
    EXPECT_THROW(lime(clf, x, fs, 10, 0.0, 0), ConfigError);  // < 10 * d samples
    fs.std = {0.0, 0.0, 0.0};
    EXPECT_THROW(lime(clf, x, fs, 30, 0.0, 0), DataError);
}

TEST(Lime, DeterministicForFixedSeed) {
    const MonotoneModel clf(3, 1);
    const std::vector<double> x = {0.1, 0.2, 0.3};
    const Explanation a = lime(clf, x, unit_stats(3), 30, 0.0, 9);
    const Explanation b = lime(clf, x, unit_stats(3), 30, 0.0, 9);
    EXPECT_EQ(a.attributions, b.attributions);
}

Dataset rule_train_data() {
    FeatureSchema s;
    s.names = {"f0", "f1", "f2"};
    s.non_negative = {true, true, true};
    s.label_name = "y";
    Rng rng(31);
    std::vector<double> values;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        const double f0 = 3.0 + rng.normal();
        const double f1 = 6.0 + 2.0 * rng.normal();  // std ~2 so samples straddle 5
        const double f2 = 1.0 + 0.5 * rng.normal();
        values.insert(values.end(), {f0, f1, f2});
        labels.push_back(f1 > 5.0 ? 1 : 0);
    }
    return Dataset(std::move(s), std::move(values), std::move(labels));
}

TEST(RuleSurrogate, RecoversThresholdRuleAndDirection) {
    const ThresholdModel clf(3, 1, 5.0);  // black box: positive iff f1 > 5
    const Dataset train = rule_train_data();
    const std::vector<double> x = {3.0, 7.0, 1.0};
    const Explanation e = rule_surrogate(clf, x, train, 600, 4);
    ASSERT_FALSE(e.no_rule);
    ASSERT_FALSE(e.rules.empty());

    // the dominant rule concerns feature 1 with a threshold near 5
    const Rule* on_f1 = nullptr;
    for (const Rule& r : e.rules)
        if (r.feature == 1) on_f1 = &r;
    ASSERT_NE(on_f1, nullptr);
    EXPECT_NEAR(on_f1->threshold, 5.0, 0.5);
    EXPECT_EQ(on_f1->direction, RuleDirection::IncreaseTowardPositive);
    EXPECT_GT(e.attributions[1], 0.0);

    // rank puts the rule feature first
    const ImportanceRank rank = importance_rank(e);
    EXPECT_EQ(rank.order[0], 1u);
}

TEST(RuleSurrogate, ConstantModelYieldsNoRule) {
    const ConstantModel clf(3);
    const Dataset train = rule_train_data();
    const std::vector<double> x = {3.0, 6.0, 1.0};
    const Explanation e = rule_surrogate(clf, x, train, 300, 8);
    EXPECT_TRUE(e.no_rule);
    EXPECT_TRUE(e.rules.empty());
    for (double a : e.attributions) EXPECT_EQ(a, 0.0);
}

TEST(RuleSurrogate, DeterministicForFixedSeed) {
    const ThresholdModel clf(3, 1, 5.0);
    const Dataset train = rule_train_data();
    const std::vector<double> x = {3.0, 7.0, 1.0};
    const Explanation a = rule_surrogate(clf, x, train, 300, 11);
    const Explanation b = rule_surrogate(clf, x, train, 300, 11);
    EXPECT_EQ(a.attributions, b.attributions);
    ASSERT_EQ(a.rules.size(), b.rules.size());
    for (std::size_t i = 0; i < a.rules.size(); ++i) {
        EXPECT_EQ(a.rules[i].feature, b.rules[i].feature);
        EXPECT_EQ(a.rules[i].threshold, b.rules[i].threshold);
    }
}

TEST(ExplanationJson, StableFieldOrder) {
    Explanation e;
    e.instance_index = 12;
    e.kind = ExplainerKind::Rule;
    e.attributions = {0.0, 0.4};
    e.rules = {{1, 5.0, RuleDirection::IncreaseTowardPositive}};
    const auto j = explanation_to_json(e);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"instance_index", "explainer", "attributions",
                                              "base_value", "rules", "no_rule"}));
    EXPECT_EQ(j["rules"][0]["direction"], "increase-toward-positive");
    // identical explanations serialize to identical bytes
    EXPECT_EQ(j.dump(), explanation_to_json(e).dump());
}

TEST(ImportanceRank, OrderingAndTies) {
    Explanation e;
    e.attributions = {0.096, 0.13, -0.02};
    const ImportanceRank r = importance_rank(e);
    EXPECT_EQ(r.order[0], 1u);  // 0.13 first
    EXPECT_EQ(r.order[1], 0u);  // 0.096 second
    EXPECT_EQ(r.order[2], 2u);
    EXPECT_DOUBLE_EQ(r.scores[0], 0.13);

    Explanation ties;
    ties.attributions = {0.5, -0.5, 0.5};
    const ImportanceRank rt = importance_rank(ties);
    EXPECT_EQ(rt.order, (std::vector<std::size_t>{0, 1, 2}));

    Explanation single;
    single.attributions = {0.3};
    EXPECT_EQ(importance_rank(single).order.size(), 1u);
}

TEST(ImportanceRank, PermutationAndScaleInvariance) {
    Rng rng(61);
    for (int rep = 0; rep < 50; ++rep) {
        Explanation e;
        const std::size_t d = 1 + rng.uniform_int(12);
        e.attributions.resize(d);
        for (double& a : e.attributions) a = rng.normal();
        const ImportanceRank r = importance_rank(e);

        std::vector<std::size_t> sorted = r.order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(sorted[i], i);

        Explanation scaled = e;
        const double c = 1e-3 + rng.uniform() * 10.0;
        for (double& a : scaled.attributions) a *= c;
        EXPECT_EQ(importance_rank(scaled).order, r.order);
    }
}

}  // namespace
