#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tabattack/common.hpp"
#include "tabattack/dataset.hpp"
#include "tabattack/models.hpp"
#include "tabattack/rng.hpp"
#include "tabattack/tree.hpp"

namespace tabattack {

enum class ExplainerKind { ExactShap, KernelShap, Lime, Rule };

inline std::string to_string(ExplainerKind k) {
    switch (k) {
        case ExplainerKind::ExactShap: return "EXACT_SHAP";
        case ExplainerKind::KernelShap: return "KERNEL_SHAP";
        case ExplainerKind::Lime: return "LIME";
        case ExplainerKind::Rule: return "RULE";
    }
    return "?";
}

inline ExplainerKind explainer_kind_from_string(const std::string& s) {
    if (s == "EXACT_SHAP") return ExplainerKind::ExactShap;
    if (s == "KERNEL_SHAP") return ExplainerKind::KernelShap;
    if (s == "LIME") return ExplainerKind::Lime;
    if (s == "RULE") return ExplainerKind::Rule;
    throw ConfigError("unknown explainer '" + s + "'");
}

/// Which way to push a feature to raise the positive-class Risk Score.
enum class RuleDirection { IncreaseTowardPositive, DecreaseTowardPositive };

struct Rule {
    std::size_t feature = 0;
    double threshold = 0.0;
    RuleDirection direction = RuleDirection::IncreaseTowardPositive;
};

/// Per-instance feature attributions with signs; rule surrogates add
/// threshold/direction guidance for the attack.
struct Explanation {
    std::size_t instance_index = 0;
    ExplainerKind kind = ExplainerKind::ExactShap;
    std::vector<double> attributions;
    double base_value = 0.0;
    std::vector<Rule> rules;
    bool no_rule = false;
};

/// Feature indices ordered by descending |attribution|, ties broken by
/// ascending index; the (signed) scores ride along in rank order.
struct ImportanceRank {
    std::vector<std::size_t> order;
    std::vector<double> scores;
};

inline ImportanceRank importance_rank(const Explanation& expl) {
    ImportanceRank rank;
    rank.order.resize(expl.attributions.size());
    std::iota(rank.order.begin(), rank.order.end(), 0);
    std::stable_sort(rank.order.begin(), rank.order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(expl.attributions[a]) > std::abs(expl.attributions[b]);
    });
    rank.scores.reserve(rank.order.size());
    for (std::size_t f : rank.order) rank.scores.push_back(expl.attributions[f]);
    return rank;
}

namespace detail {

// Coalition value: features in the mask come from x, the rest from each
// background row in turn; v is the mean positive-class probability.
inline double coalition_value(const Classifier& clf, std::span<const double> x,
                              const std::vector<std::vector<double>>& background,
                              std::uint64_t mask) {
    thread_local std::vector<double> z;
    double sum = 0.0;
    for (const auto& b : background) {
        z.assign(b.begin(), b.end());
        for (std::size_t i = 0; i < x.size(); ++i)
            if (mask & (1ull << i)) z[i] = x[i];
        sum += clf.predict_proba(z).second;
    }
    return sum / static_cast<double>(background.size());
}

inline void check_background(std::span<const double> x,
                             const std::vector<std::vector<double>>& background) {
    if (background.empty()) throw DataError("shapley: empty background set");
    for (const auto& b : background)
        if (b.size() != x.size()) throw DataError("shapley: background row arity mismatch");
}

}  // namespace detail

/// Exact Shapley values by full coalition enumeration (feature count <= 12).
/// Satisfies efficiency: base_value + sum(attributions) equals the model's
/// positive-class probability at x.
inline Explanation exact_shapley(const Classifier& clf, std::span<const double> x,
                                 const std::vector<std::vector<double>>& background) {
    const std::size_t n = x.size();
    if (n == 0 || n > 12)
        throw ConfigError("exact_shapley: feature count must be in [1,12] for enumeration");
    detail::check_background(x, background);

    const std::size_t n_masks = 1ull << n;
    std::vector<double> v(n_masks);
    for (std::size_t mask = 0; mask < n_masks; ++mask)
        v[mask] = detail::coalition_value(clf, x, background, mask);

    // w[s] = s! (n-1-s)! / n!
    std::vector<double> fact(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> w(n);
    for (std::size_t s = 0; s < n; ++s) w[s] = fact[s] * fact[n - 1 - s] / fact[n];

    Explanation expl;
    expl.kind = ExplainerKind::ExactShap;
    expl.base_value = v[0];
    expl.attributions.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bit = 1ull << i;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            const auto s = static_cast<std::size_t>(std::popcount(mask));
            phi += w[s] * (v[mask | bit] - v[mask]);
        }
        expl.attributions[i] = phi;
    }
    return expl;
}

/// Kernel SHAP: Shapley-kernel-weighted least squares over sampled
/// coalitions, with the empty and full coalitions pinned exactly (they fix
/// the base value and the efficiency constraint).
inline Explanation kernel_shap(const Classifier& clf, std::span<const double> x,
                               const std::vector<std::vector<double>>& background,
                               int n_coalitions, std::uint64_t seed) {
    const std::size_t n = x.size();
    if (n == 0) throw DataError("kernel_shap: empty instance");
    detail::check_background(x, background);
    if (n_coalitions < static_cast<int>(2 * n))
        throw ConfigError("kernel_shap: n_coalitions must be >= 2 * n_features");

    const double v0 = detail::coalition_value(clf, x, background, 0);
    const double v1 = detail::coalition_value(clf, x, background, (n >= 64 ? ~0ull : (1ull << n) - 1));

    Explanation expl;
    expl.kind = ExplainerKind::KernelShap;
    expl.base_value = v0;
    expl.attributions.assign(n, 0.0);
    if (n == 1) {
        expl.attributions[0] = v1 - v0;
        return expl;
    }

    // sample interior coalition sizes with probability proportional to the
    // Shapley kernel mass of that size
    std::vector<double> size_cdf(n - 1);
    double acc = 0.0;
    for (std::size_t s = 1; s <= n - 1; ++s) {
        acc += (static_cast<double>(n) - 1.0) / (static_cast<double>(s) * static_cast<double>(n - s));
        size_cdf[s - 1] = acc;
    }
    for (double& c : size_cdf) c /= acc;

    Rng rng(derive_seed(seed, 0x4b));
    std::map<std::uint64_t, double> coalition_weight;  // ordered => deterministic row order
    const int n_samples = n_coalitions - 2;
    for (int t = 0; t < n_samples; ++t) {
        const double u = rng.uniform();
        std::size_t s = 1;
        while (s < n - 1 && u > size_cdf[s - 1]) ++s;
        std::uint64_t mask = 0;
        for (std::size_t i : rng.sample_without_replacement(n, s)) mask |= 1ull << i;
        coalition_weight[mask] += 1.0;
    }

    const std::size_t rows = coalition_weight.size();
    Eigen::MatrixXd a(rows, n - 1);
    Eigen::VectorXd y(rows);
    std::size_t r = 0;
    const double efficiency_gap = v1 - v0;
    for (const auto& [mask, weight] : coalition_weight) {
        const double vs = detail::coalition_value(clf, x, background, mask);
        const double z_last = (mask >> (n - 1)) & 1ull ? 1.0 : 0.0;
        const double sw = std::sqrt(weight);
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double z_j = (mask >> j) & 1ull ? 1.0 : 0.0;
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = sw * (z_j - z_last);
        }
        y(static_cast<Eigen::Index>(r)) = sw * (vs - v0 - z_last * efficiency_gap);
        ++r;
    }

    const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(y);
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        expl.attributions[j] = beta(static_cast<Eigen::Index>(j));
        sum += expl.attributions[j];
    }
    expl.attributions[n - 1] = efficiency_gap - sum;
    return expl;
}

/// LIME-style local surrogate: Gaussian perturbations scaled by the training
/// stds, distance-kernel weights, weighted ridge regression; attributions are
/// the fitted linear coefficients.
inline Explanation lime(const Classifier& clf, std::span<const double> x,
                        const FeatureStats& stats, int n_samples, double kernel_width,
                        std::uint64_t seed) {
    const std::size_t d = x.size();
    if (stats.std.size() != d) throw DataError("lime: stats arity mismatch");
    if (n_samples < static_cast<int>(10 * d))
        throw ConfigError("lime: n_samples must be >= 10 * n_features");
    bool any_std = false;
    for (double s : stats.std) any_std |= s > 0.0;
    if (!any_std) throw DataError("lime: all feature stds are zero, nothing to perturb");
    if (kernel_width <= 0.0) kernel_width = 0.75 * std::sqrt(static_cast<double>(d));

    Rng rng(derive_seed(seed, 0x11e));
    const std::size_t m = static_cast<std::size_t>(n_samples);

    // centered design [1 | z - x]; centering keeps the normal equations well
    // conditioned and leaves the coefficients unchanged
    Eigen::MatrixXd design(m, d + 1);
    Eigen::VectorXd target(m);
    Eigen::VectorXd weight(m);
    std::vector<double> z(d);
    for (std::size_t t = 0; t < m; ++t) {
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (t == 0) {
                z[j] = x[j];  // the instance itself is always in the sample
            } else {
                const double g = stats.std[j] > 0.0 ? stats.std[j] * rng.normal() : 0.0;
                z[j] = x[j] + g;
            }
            const double u = z[j] - x[j];
            if (stats.std[j] > 0.0) {
                const double su = u / stats.std[j];
                dist2 += su * su;
            }
            design(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j + 1)) = u;
        }
        design(static_cast<Eigen::Index>(t), 0) = 1.0;
        target(static_cast<Eigen::Index>(t)) = clf.predict_proba(z).second;
        weight(static_cast<Eigen::Index>(t)) = std::exp(-dist2 / (kernel_width * kernel_width));
    }

    const double ridge = 1e-3;
    Eigen::MatrixXd gram = design.transpose() * weight.asDiagonal() * design;
    for (std::size_t j = 1; j <= d; ++j)
        gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += ridge;
    const Eigen::VectorXd rhs = design.transpose() * (weight.asDiagonal() * target);
    const Eigen::VectorXd beta = gram.ldlt().solve(rhs);

    Explanation expl;
    expl.kind = ExplainerKind::Lime;
    expl.base_value = beta(0);
    expl.attributions.resize(d);
    for (std::size_t j = 0; j < d; ++j) expl.attributions[j] = beta(static_cast<Eigen::Index>(j + 1));
    return expl;
}

/// Local rule surrogate: fits a depth-limited decision tree on the model's
/// hard labels over LIME-style perturbations and reads x's decision path off
/// as (feature, threshold, direction) rules. Direction states which side of
/// the threshold raises the positive-class Risk Score. Attributions are the
/// surrogate's impurity-decrease importances restricted to path features.
inline Explanation rule_surrogate(const Classifier& clf, std::span<const double> x,
                                  const Dataset& train, int n_samples, std::uint64_t seed) {
    if (train.n_rows() < 2) throw DataError("rule_surrogate: need at least 2 training rows");
    const FeatureStats stats = feature_stats(train);
    const std::size_t d = x.size();
    if (stats.std.size() != d) throw DataError("rule_surrogate: arity mismatch");
    if (n_samples < 2) throw ConfigError("rule_surrogate: n_samples must be >= 2");

    Rng rng(derive_seed(seed, 0x27e));
    const std::size_t m = static_cast<std::size_t>(n_samples);
    std::vector<double> xs(m * d);
    std::vector<double> ys(m);
    std::vector<double> z(d);
    for (std::size_t t = 0; t < m; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            z[j] = t == 0 ? x[j]
                          : x[j] + (stats.std[j] > 0.0 ? stats.std[j] * rng.normal() : 0.0);
            xs[t * d + j] = z[j];
        }
        ys[t] = static_cast<double>(clf.predict(z));
    }

    TreeParams tp;
    tp.max_depth = 3;
    tp.min_samples_leaf = m >= 50 ? 5 : 1;
    DecisionTree surrogate;
    surrogate.fit({xs.data(), m, d}, ys, {}, tp);

    Explanation expl;
    expl.kind = ExplainerKind::Rule;
    expl.attributions.assign(d, 0.0);

    const auto path = surrogate.decision_path(x);
    if (path.empty()) {
        expl.no_rule = true;
        return expl;
    }

    // deepest occurrence wins per feature; report in path order
    std::vector<int> rule_at(d, -1);
    std::vector<Rule> by_node(path.size());
    for (std::size_t p = 0; p < path.size(); ++p) {
        const auto& nd = surrogate.nodes()[static_cast<std::size_t>(path[p])];
        const double left_p1 = surrogate.nodes()[static_cast<std::size_t>(nd.left)].value;
        const double right_p1 = surrogate.nodes()[static_cast<std::size_t>(nd.right)].value;
        Rule rule;
        rule.feature = static_cast<std::size_t>(nd.feature);
        rule.threshold = nd.threshold;
        rule.direction = right_p1 >= left_p1 ? RuleDirection::IncreaseTowardPositive
                                             : RuleDirection::DecreaseTowardPositive;
        by_node[p] = rule;
        rule_at[rule.feature] = static_cast<int>(p);
    }
    std::vector<bool> seen(d, false);
    for (std::size_t p = 0; p < path.size(); ++p) {
        const std::size_t f = by_node[p].feature;
        if (seen[f]) continue;
        seen[f] = true;
        expl.rules.push_back(by_node[static_cast<std::size_t>(rule_at[f])]);
    }

    const auto& importances = surrogate.feature_importances();
    for (const Rule& r : expl.rules) expl.attributions[r.feature] = importances[r.feature];
    return expl;
}

/// Seeded subsample of up to `size` training rows, used as the Shapley
/// background set.
inline std::vector<std::vector<double>> background_sample(const Dataset& train, std::size_t size,
                                                          std::uint64_t seed) {
    if (train.n_rows() == 0) throw DataError("background_sample: empty dataset");
    Rng rng(derive_seed(seed, 0xb6));
    std::vector<std::vector<double>> rows;
    if (train.n_rows() <= size) {
        for (std::size_t i = 0; i < train.n_rows(); ++i) {
            const auto r = train.row(i);
            rows.emplace_back(r.begin(), r.end());
        }
        return rows;
    }
    auto idx = rng.sample_without_replacement(train.n_rows(), size);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) {
        const auto r = train.row(i);
        rows.emplace_back(r.begin(), r.end());
    }
    return rows;
}

inline nlohmann::ordered_json explanation_to_json(const Explanation& e) {
    nlohmann::ordered_json j;
    j["instance_index"] = e.instance_index;
    j["explainer"] = to_string(e.kind);
    j["attributions"] = e.attributions;
    j["base_value"] = e.base_value;
    nlohmann::ordered_json rules = nlohmann::ordered_json::array();
    for (const Rule& r : e.rules) {
        rules.push_back({{"feature", r.feature},
                         {"threshold", r.threshold},
                         {"direction", r.direction == RuleDirection::IncreaseTowardPositive
                                           ? "increase-toward-positive"
                                           : "decrease-toward-positive"}});
    }
    j["rules"] = std::move(rules);
    j["no_rule"] = e.no_rule;
    return j;
}

}  // namespace tabattack
