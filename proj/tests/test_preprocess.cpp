#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "tabattack/preprocess.hpp"

using namespace tabattack;

namespace {

Dataset from_columns(const std::vector<std::vector<double>>& cols, std::vector<int> labels) {
    FeatureSchema s;
    for (std::size_t j = 0; j < cols.size(); ++j) s.names.push_back(std::string(1, char('a' + j)));
    s.non_negative.assign(cols.size(), false);
    s.label_name = "y";
    std::vector<double> values;
    for (std::size_t i = 0; i < cols[0].size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) values.push_back(cols[j][i]);
    return Dataset(std::move(s), std::move(values), std::move(labels));
}

TEST(Spearman, RankCorrelationOracle) {
    // rho of a=(1,2,3,4) vs b=(4,1,3,2): ranks are identities, oracle value -0.4
    EXPECT_NEAR(spearman_rho({1, 2, 3, 4}, {4, 1, 3, 2}), -0.4, 1e-12);
    EXPECT_NEAR(spearman_rho({1, 2, 3}, {10, 20, 30}), 1.0, 1e-12);
    EXPECT_NEAR(spearman_rho({1, 2, 3}, {30, 20, 10}), -1.0, 1e-12);
    // constant column correlates 0 by definition
    EXPECT_DOUBLE_EQ(spearman_rho({5, 5, 5}, {1, 2, 3}), 0.0);
    // monotone transform leaves rho at 1
    EXPECT_NEAR(spearman_rho({1, 2, 3, 4}, {1, 4, 9, 16}), 1.0, 1e-12);
}

TEST(Spearman, TiesGetAverageRanks) {
    // hand-checked: a=(1,1,2), ranks (1.5,1.5,3); b=(2,1,3), ranks (2,1,3)
    // pearson((1.5,1.5,3),(2,1,3)) = (3/2) / (sqrt(3/2)*sqrt(2)) = sqrt(3)/2
    EXPECT_NEAR(spearman_rho({1, 1, 2}, {2, 1, 3}), std::sqrt(3.0) / 2.0, 1e-12);
}

TEST(SpearmanFilter, DropsLaterOfIdenticalPair) {
    const auto ds = from_columns({{1, 2, 3, 4}, {1, 2, 3, 4}, {4, 1, 3, 2}}, {0, 1, 0, 1});
    const auto res = spearman_filter(ds, 0.7);
    ASSERT_EQ(res.dropped.size(), 1u);
    EXPECT_EQ(res.dropped[0], "b");
    EXPECT_EQ(res.reduced.n_features(), 2u);
    EXPECT_EQ(res.reduced.schema().names[0], "a");
    EXPECT_EQ(res.reduced.schema().names[1], "c");
}

TEST(SpearmanFilter, KeepsUncorrelatedAndConstantColumns) {
    const auto ds = from_columns({{1, 2, 3, 4}, {4, 1, 3, 2}, {7, 7, 7, 7}}, {0, 1, 0, 1});
    const auto res = spearman_filter(ds, 0.7);
    EXPECT_TRUE(res.dropped.empty());
    EXPECT_EQ(res.reduced.n_features(), 3u);
}

TEST(SpearmanFilter, IsIdempotent) {
    const auto ds = from_columns({{1, 2, 3, 4, 5},
                                  {2, 4, 6, 8, 10},
                                  {5, 4, 3, 2, 1},
                                  {1, 3, 2, 5, 4}},
                                 {0, 1, 0, 1, 0});
    const auto once = spearman_filter(ds, 0.7);
    const auto twice = spearman_filter(once.reduced, 0.7);
    EXPECT_TRUE(twice.dropped.empty());
    EXPECT_EQ(twice.reduced.n_features(), once.reduced.n_features());
}

TEST(SpearmanFilter, RejectsBadThreshold) {
    const auto ds = from_columns({{1, 2, 3}}, {0, 1, 0});
    EXPECT_THROW(spearman_filter(ds, 0.0), ConfigError);
    EXPECT_THROW(spearman_filter(ds, 1.5), ConfigError);
}

Dataset imbalanced(std::size_t n_major, std::size_t n_minor) {
    FeatureSchema s;
    s.names = {"a", "b"};
    s.non_negative = {true, true};
    s.label_name = "y";
    std::vector<double> values;
    std::vector<int> labels;
    Rng rng(5);
    for (std::size_t i = 0; i < n_major; ++i) {
        values.push_back(10.0 + rng.uniform());
        values.push_back(20.0 + rng.uniform());
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < n_minor; ++i) {
        values.push_back(1.0 + rng.uniform());
        values.push_back(2.0 + rng.uniform());
        labels.push_back(1);
    }
    return Dataset(std::move(s), std::move(values), std::move(labels));
}

TEST(Smote, BalancesNinetyTen) {
    const Dataset ds = imbalanced(90, 10);
    const Dataset out = smote(ds, 5, 42);
    EXPECT_EQ(out.count_label(0), 90u);
    EXPECT_EQ(out.count_label(1), 90u);
    // originals preserved as a prefix
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        EXPECT_EQ(out.label(i), ds.label(i));
        for (std::size_t j = 0; j < ds.n_features(); ++j) EXPECT_EQ(out.at(i, j), ds.at(i, j));
    }
}

TEST(Smote, SyntheticRowsAreConvexCombinations) {
    const Dataset ds = imbalanced(80, 10);
    const Dataset out = smote(ds, 3, 7);
    // every synthetic row must sit in the componentwise box of some minority pair
    std::vector<std::span<const double>> minority;
    for (std::size_t i = 0; i < ds.n_rows(); ++i)
        if (ds.label(i) == 1) minority.push_back(ds.row(i));

    for (std::size_t i = ds.n_rows(); i < out.n_rows(); ++i) {
        EXPECT_EQ(out.label(i), 1);
        const auto r = out.row(i);
        bool in_some_box = false;
        for (std::size_t a = 0; a < minority.size() && !in_some_box; ++a) {
            for (std::size_t b = 0; b < minority.size() && !in_some_box; ++b) {
                if (a == b) continue;
                bool ok = true;
                for (std::size_t j = 0; j < r.size(); ++j) {
                    const double lo = std::min(minority[a][j], minority[b][j]);
                    const double hi = std::max(minority[a][j], minority[b][j]);
                    ok = ok && r[j] >= lo - 1e-12 && r[j] <= hi + 1e-12;
                }
                in_some_box = ok;
            }
        }
        EXPECT_TRUE(in_some_box) << "synthetic row " << i << " outside every parent box";
    }
}

TEST(Smote, SegmentFixtureWithTwoMinorityRows) {
    FeatureSchema s;
    s.names = {"a", "b"};
    s.non_negative = {true, true};
    s.label_name = "y";
    // minority rows (0,0) and (2,2); k=1 forces the neighbor choice
    std::vector<double> values = {0, 0, 2, 2, 9, 9, 9, 8, 8, 9, 7, 9};
    std::vector<int> labels = {1, 1, 0, 0, 0, 0};
    const Dataset ds(s, values, labels);
    const Dataset out = smote(ds, 1, 3);
    EXPECT_EQ(out.count_label(1), 4u);
    for (std::size_t i = ds.n_rows(); i < out.n_rows(); ++i) {
        const auto r = out.row(i);
        // on the segment between (0,0) and (2,2): both coordinates equal, in [0,2]
        EXPECT_NEAR(r[0], r[1], 1e-12);
        EXPECT_GE(r[0], 0.0);
        EXPECT_LE(r[0], 2.0);
    }
}

TEST(Smote, DeterministicAndErrors) {
    const Dataset ds = imbalanced(40, 7);
    const Dataset a = smote(ds, 5, 11);
    const Dataset b = smote(ds, 5, 11);
    EXPECT_EQ(a.values(), b.values());

    const Dataset single_minority = imbalanced(10, 1);
    EXPECT_THROW(smote(single_minority, 5, 0), DataError);

    FeatureSchema s;
    s.names = {"a"};
    s.non_negative = {true};
    s.label_name = "y";
    const Dataset one_class(s, {1.0, 2.0}, {1, 1});
    EXPECT_THROW(smote(one_class, 5, 0), DataError);
}

TEST(UndersampleTest, DownsamplesMajorityOnly) {
    const Dataset ds = imbalanced(1524, 520);
    const Dataset out = undersample_test(ds, 13);
    EXPECT_EQ(out.count_label(0), 520u);
    EXPECT_EQ(out.count_label(1), 520u);
    // minority rows untouched
    std::size_t minority_seen = 0;
    for (std::size_t i = 0; i < out.n_rows(); ++i) minority_seen += out.label(i) == 1;
    EXPECT_EQ(minority_seen, 520u);
}

TEST(UndersampleTest, DeterministicForFixedSeed) {
    const Dataset ds = imbalanced(200, 35);
    const Dataset a = undersample_test(ds, 91);
    const Dataset b = undersample_test(ds, 91);
    EXPECT_EQ(a.values(), b.values());
    EXPECT_EQ(a.labels(), b.labels());
}

TEST(UndersampleTest, BalancedIsNoOpAndSingleClassErrors) {
    const Dataset ds = imbalanced(20, 20);
    const Dataset out = undersample_test(ds, 0);
    EXPECT_EQ(out.values(), ds.values());
    EXPECT_EQ(out.labels(), ds.labels());

    FeatureSchema s;
    s.names = {"a"};
    s.non_negative = {true};
    s.label_name = "y";
    const Dataset all_pos(s, {1.0, 2.0}, {1, 1});
    EXPECT_THROW(undersample_test(all_pos, 0), DataError);
}

}  // namespace
