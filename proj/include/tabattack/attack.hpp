#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabattack/common.hpp"
#include "tabattack/dataset.hpp"
#include "tabattack/explain.hpp"
#include "tabattack/models.hpp"
#include "tabattack/rng.hpp"

namespace tabattack {

enum class DirectionPolicy { Auto, BothPickBest, Guided };

inline std::string to_string(DirectionPolicy p) {
    switch (p) {
        case DirectionPolicy::Auto: return "AUTO";
        case DirectionPolicy::BothPickBest: return "BOTH_PICK_BEST";
        case DirectionPolicy::Guided: return "GUIDED";
    }
    return "?";
}

inline DirectionPolicy direction_policy_from_string(const std::string& s) {
    if (s == "AUTO") return DirectionPolicy::Auto;
    if (s == "BOTH_PICK_BEST") return DirectionPolicy::BothPickBest;
    if (s == "GUIDED") return DirectionPolicy::Guided;
    throw ConfigError("unknown direction policy '" + s + "'");
}

struct AttackConfig {
    ExplainerKind explainer = ExplainerKind::KernelShap;
    int max_k = 0;  // 0 => floor(n_features / 2)
    double lambda_weight = 1.0;
    DirectionPolicy policy = DirectionPolicy::Auto;  // Auto: GUIDED for RULE, else BOTH_PICK_BEST
    std::uint64_t seed = 0;
    // explainer sampling knobs
    int n_coalitions = 2000;
    int n_samples = 0;          // 0 => 10 * n_features
    double kernel_width = 0.0;  // 0 => 0.75 * sqrt(n_features)
    std::size_t background_size = 100;
};

/// One attacked instance: the perturbed row differs from the original only on
/// `modified` features, each by exactly +/- one training STD, and never below
/// zero on a non-negative feature.
struct AdversarialExample {
    std::size_t instance_index = 0;  // row index in the attacked test set
    std::vector<double> original;
    std::vector<double> perturbed;
    std::vector<std::size_t> modified;
    std::vector<int> directions;  // +1 / -1 per modified feature
    bool flipped = false;
    bool immovable = false;
    double p_before = 0.0;  // positive-class probability at the original
    double p_after = 0.0;   // positive-class probability at the perturbed row
    int k_used = 0;         // feature budget of the combination that produced it
};

struct AsrCurve {
    std::vector<double> asr;  // index s-1 => prefix size s
    int chosen_k = 1;
    // representative prefix per size: the s most frequently attacked features
    std::vector<std::vector<std::size_t>> prefixes;
};

struct CorrectSubset {
    Dataset data;
    std::vector<std::size_t> indices;  // row indices into the original test set
    bool empty() const { return indices.empty(); }
};

/// Rows of `test` the model currently gets right; the attack denominator.
inline CorrectSubset correct_subset(const Classifier& clf, const Dataset& test) {
    CorrectSubset out;
    for (std::size_t i = 0; i < test.n_rows(); ++i)
        if (clf.predict(test.row(i)) == test.label(i)) out.indices.push_back(i);
    out.data = test.take_rows(out.indices);
    return out;
}

/// Strictly nested rank prefixes of sizes 1..max_k.
inline std::vector<std::vector<std::size_t>> prefix_combinations(const ImportanceRank& rank,
                                                                 int max_k) {
    if (max_k < 1) throw ConfigError("prefix_combinations: max_k must be >= 1");
    const std::size_t limit = std::min<std::size_t>(static_cast<std::size_t>(max_k),
                                                    rank.order.size());
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 1; s <= limit; ++s)
        out.emplace_back(rank.order.begin(), rank.order.begin() + static_cast<std::ptrdiff_t>(s));
    return out;
}

struct Candidate {
    std::vector<double> row;
    std::vector<std::size_t> modified;
    std::vector<int> directions;
};

struct TransformResult {
    std::vector<Candidate> candidates;
    bool immovable = false;
};

namespace detail {

inline std::optional<double> apply_move(double value, double std_dev, int sign,
                                        bool non_negative) {
    if (std_dev <= 0.0) return std::nullopt;  // no scale to move by
    const double moved = value + static_cast<double>(sign) * std_dev;
    if (non_negative && moved < 0.0) return std::nullopt;  // validity discard
    return moved;
}

}  // namespace detail

/// Candidate perturbed rows for one instance and one feature combination.
/// GUIDED follows each feature's rule direction toward the opposite of the
/// current prediction (one candidate); BOTH_PICK_BEST enumerates every sign
/// assignment. A single-feature move that would drive a non-negative feature
/// below zero is discarded (that feature stays at its original value), and
/// candidates identical to the original are removed.
inline TransformResult transform_instance(std::span<const double> x,
                                          const std::vector<std::size_t>& feature_set,
                                          const FeatureStats& stats,
                                          const FeatureSchema& schema, DirectionPolicy policy,
                                          const std::vector<Rule>& rules, int current_prediction) {
    if (feature_set.empty()) throw ConfigError("transform_instance: empty feature set");
    if (policy == DirectionPolicy::Auto)
        throw ConfigError("transform_instance: policy must be resolved before transforming");

    TransformResult out;
    auto push_candidate = [&](Candidate&& c) {
        if (c.modified.empty()) return;
        for (const Candidate& seen : out.candidates)
            if (seen.row == c.row) return;
        out.candidates.push_back(std::move(c));
    };

    if (policy == DirectionPolicy::Guided) {
        Candidate c;
        c.row.assign(x.begin(), x.end());
        for (std::size_t f : feature_set) {
            const Rule* rule = nullptr;
            for (const Rule& r : rules)
                if (r.feature == f) rule = &r;
            if (rule == nullptr) continue;  // no guidance for this feature
            const bool raise_risk = current_prediction == 0;
            const bool increase_raises =
                rule->direction == RuleDirection::IncreaseTowardPositive;
            const int sign = raise_risk == increase_raises ? 1 : -1;
            const auto moved =
                detail::apply_move(x[f], stats.std[f], sign, schema.non_negative[f]);
            if (!moved) continue;
            c.row[f] = *moved;
            c.modified.push_back(f);
            c.directions.push_back(sign);
        }
        push_candidate(std::move(c));
    } else {
        const std::size_t k = feature_set.size();
        if (k > 20) throw ConfigError("transform_instance: feature set too large to enumerate");
        for (std::uint64_t mask = 0; mask < (1ull << k); ++mask) {
            Candidate c;
            c.row.assign(x.begin(), x.end());
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t f = feature_set[j];
                const int sign = (mask >> j) & 1ull ? -1 : 1;
                const auto moved =
                    detail::apply_move(x[f], stats.std[f], sign, schema.non_negative[f]);
                if (!moved) continue;
                c.row[f] = *moved;
                c.modified.push_back(f);
                c.directions.push_back(sign);
            }
            push_candidate(std::move(c));
        }
    }
    out.immovable = out.candidates.empty();
    return out;
}

/// Evaluates every candidate and keeps the flipping one with the largest drop
/// in the original-class probability, falling back to the largest-drop
/// non-flipping candidate. Immovable instances come back flagged, unchanged.
inline AdversarialExample attack_instance(const Classifier& clf, std::span<const double> x,
                                          int label, const std::vector<std::size_t>& feature_set,
                                          const FeatureStats& stats, const FeatureSchema& schema,
                                          DirectionPolicy policy, const std::vector<Rule>& rules) {
    AdversarialExample ex;
    ex.original.assign(x.begin(), x.end());
    ex.k_used = static_cast<int>(feature_set.size());
    ex.p_before = clf.predict_proba(x).second;

    const int current = clf.predict(x);
    if (current != label)
        throw DataError("attack_instance: instance is not correctly predicted");

    const TransformResult tr =
        transform_instance(x, feature_set, stats, schema, policy, rules, current);
    if (tr.immovable) {
        ex.perturbed = ex.original;
        ex.p_after = ex.p_before;
        ex.immovable = true;
        return ex;
    }

    const double p_orig_before = label == 1 ? ex.p_before : 1.0 - ex.p_before;
    double best_drop = -std::numeric_limits<double>::infinity();
    bool best_flips = false;
    const Candidate* best = nullptr;
    double best_p1 = 0.0;
    for (const Candidate& c : tr.candidates) {
        const double p1 = clf.predict_proba(c.row).second;
        const bool flips = (p1 >= 0.5 ? 1 : 0) != label;
        const double drop = p_orig_before - (label == 1 ? p1 : 1.0 - p1);
        const bool better =
            best == nullptr || (flips && !best_flips) || (flips == best_flips && drop > best_drop);
        if (better) {
            best = &c;
            best_drop = drop;
            best_flips = flips;
            best_p1 = p1;
        }
    }

    ex.perturbed = best->row;
    ex.modified = best->modified;
    ex.directions = best->directions;
    ex.flipped = best_flips;
    ex.p_after = best_p1;
    return ex;
}

/// Attack Success Rate: flipped count over all attacked instances.
inline double asr(const std::vector<AdversarialExample>& results) {
    if (results.empty()) throw DataError("asr: no results");
    std::size_t flips = 0;
    for (const auto& r : results) flips += r.flipped ? 1 : 0;
    return static_cast<double>(flips) / static_cast<double>(results.size());
}

/// Reverse Elbow Method: k = 1 when the curve dips immediately; otherwise the
/// prefix size of the last accelerating step (the first point where the
/// successive ASR gain shrinks); the full length when gains never stop
/// growing. Accepts ASR values in [0,1] or percent in [0,100] (the rule is
/// scale-invariant).
inline int reverse_elbow(const std::vector<double>& asr_values) {
    if (asr_values.empty()) throw DataError("reverse_elbow: empty input");
    for (double v : asr_values)
        if (!(v >= 0.0 && v <= 100.0))
            throw DataError("reverse_elbow: ASR value outside [0,100]");
    const std::size_t n = asr_values.size();
    if (n == 1) return 1;
    if (asr_values[1] < asr_values[0]) return 1;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double prev_gain = asr_values[i] - asr_values[i - 1];
        const double gain = asr_values[i + 1] - asr_values[i];
        if (gain < prev_gain) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(n);
}

/// Bottom-of-rank makeshift baseline: the k lowest-ranked features. Requires
/// the bottom set not to overlap the top-k.
inline std::vector<std::size_t> baseline_bl(const ImportanceRank& rank, int k) {
    const std::size_t n = rank.order.size();
    if (k < 1) throw ConfigError("baseline_bl: k must be >= 1");
    if (static_cast<std::size_t>(2 * k) > n)
        throw ConfigError("baseline_bl: bottom-" + std::to_string(k) +
                          " overlaps top-" + std::to_string(k));
    return {rank.order.end() - k, rank.order.end()};
}

/// Random makeshift baseline: k features sampled uniformly without
/// replacement from outside the top-k.
inline std::vector<std::size_t> baseline_br(const ImportanceRank& rank, int k,
                                            std::uint64_t seed) {
    const std::size_t n = rank.order.size();
    if (k < 1) throw ConfigError("baseline_br: k must be >= 1");
    if (n - static_cast<std::size_t>(k) < static_cast<std::size_t>(k))
        throw ConfigError("baseline_br: not enough non-top features for k=" + std::to_string(k));
    Rng rng(derive_seed(seed, 0xbc));
    const std::size_t pool = n - static_cast<std::size_t>(k);
    std::vector<std::size_t> out;
    for (std::size_t p : rng.sample_without_replacement(pool, static_cast<std::size_t>(k)))
        out.push_back(rank.order[static_cast<std::size_t>(k) + p]);
    return out;
}

struct AttackContext {
    const Dataset* train = nullptr;       // rule surrogate fits + Shapley background
    const FeatureStats* stats = nullptr;  // perturbation magnitudes (pre-SMOTE train)
};

struct AttackResult {
    AsrCurve curve;
    std::vector<AdversarialExample> examples;  // at chosen_k
    double objective = 0.0;                    // chosen_k - lambda * ASR(chosen_k)
    CorrectSubset subset;
    std::vector<Explanation> explanations;  // one per subset instance
    std::vector<ImportanceRank> ranks;      // one per subset instance
};

namespace detail {

inline Explanation explain_one(const Classifier& clf, std::span<const double> x,
                               const AttackConfig& cfg, const AttackContext& ctx,
                               const std::vector<std::vector<double>>& background,
                               std::uint64_t seed) {
    const std::size_t d = x.size();
    const int n_samples = cfg.n_samples > 0 ? cfg.n_samples : static_cast<int>(10 * d);
    switch (cfg.explainer) {
        case ExplainerKind::ExactShap:
            return exact_shapley(clf, x, background);
        case ExplainerKind::KernelShap:
            return kernel_shap(clf, x, background, cfg.n_coalitions, seed);
        case ExplainerKind::Lime:
            if (ctx.stats == nullptr) throw ConfigError("attack: LIME needs feature stats");
            return lime(clf, x, *ctx.stats, n_samples, cfg.kernel_width, seed);
        case ExplainerKind::Rule:
            if (ctx.train == nullptr) throw ConfigError("attack: RULE needs training data");
            return rule_surrogate(clf, x, *ctx.train, n_samples, seed);
    }
    throw ConfigError("attack: unhandled explainer kind");
}

inline DirectionPolicy resolve_policy(const AttackConfig& cfg) {
    if (cfg.policy != DirectionPolicy::Auto) return cfg.policy;
    return cfg.explainer == ExplainerKind::Rule ? DirectionPolicy::Guided
                                                : DirectionPolicy::BothPickBest;
}

}  // namespace detail

/// Runs the full explanation-guided attack: one explanation per correctly
/// predicted instance, ASR for every rank-prefix size 1..max_k, k selection
/// by the Reverse Elbow Method, and the aggregated minimization objective
/// chosen_k - lambda * ASR(chosen_k). Deterministic for a fixed seed; each
/// instance draws its own RNG stream keyed by (seed, original row index).
inline AttackResult run_attack(const Classifier& clf, const Dataset& test,
                               const AttackConfig& cfg, const AttackContext& ctx) {
    if (ctx.stats == nullptr) throw ConfigError("run_attack: feature stats are required");
    if (ctx.train == nullptr) throw ConfigError("run_attack: training data is required");
    const std::size_t d = test.n_features();
    if (d == 0) throw DataError("run_attack: no features");

    AttackResult res;
    res.subset = correct_subset(clf, test);
    if (res.subset.empty())
        throw DataError("run_attack: model predicts no test instance correctly, nothing to attack");

    const int half = std::max(1, static_cast<int>(d / 2));
    const int max_k = cfg.max_k > 0 ? std::clamp(cfg.max_k, 1, half) : half;
    const DirectionPolicy policy = detail::resolve_policy(cfg);

    std::vector<std::vector<double>> background;
    if (cfg.explainer == ExplainerKind::ExactShap || cfg.explainer == ExplainerKind::KernelShap)
        background = background_sample(*ctx.train, cfg.background_size,
                                       derive_seed(cfg.seed, 0xb9));

    const std::size_t m = res.subset.indices.size();
    res.explanations.resize(m);
    res.ranks.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::uint64_t eseed = derive_seed(cfg.seed, res.subset.indices[i], 0xe1);
        res.explanations[i] = detail::explain_one(clf, res.subset.data.row(i), cfg, ctx,
                                                  background, eseed);
        res.explanations[i].instance_index = res.subset.indices[i];
        res.ranks[i] = importance_rank(res.explanations[i]);
    }

    std::vector<std::vector<AdversarialExample>> per_size(static_cast<std::size_t>(max_k));
    res.curve.prefixes.resize(static_cast<std::size_t>(max_k));
    for (int s = 1; s <= max_k; ++s) {
        auto& bucket = per_size[static_cast<std::size_t>(s - 1)];
        bucket.reserve(m);
        std::vector<std::size_t> feature_counts(d, 0);
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<std::size_t> prefix(res.ranks[i].order.begin(),
                                            res.ranks[i].order.begin() + s);
            for (std::size_t f : prefix) ++feature_counts[f];
            AdversarialExample ex = attack_instance(
                clf, res.subset.data.row(i), res.subset.data.label(i), prefix, *ctx.stats,
                test.schema(), policy, res.explanations[i].rules);
            ex.instance_index = res.subset.indices[i];
            bucket.push_back(std::move(ex));
        }
        res.curve.asr.push_back(asr(bucket));

        // representative prefix: the s most frequently attacked features
        std::vector<std::size_t> by_count(d);
        std::iota(by_count.begin(), by_count.end(), 0);
        std::stable_sort(by_count.begin(), by_count.end(), [&](std::size_t a, std::size_t b) {
            return feature_counts[a] > feature_counts[b];
        });
        by_count.resize(static_cast<std::size_t>(s));
        res.curve.prefixes[static_cast<std::size_t>(s - 1)] = std::move(by_count);
    }

    res.curve.chosen_k = reverse_elbow(res.curve.asr);
    res.examples = std::move(per_size[static_cast<std::size_t>(res.curve.chosen_k - 1)]);
    res.objective = static_cast<double>(res.curve.chosen_k) -
                    cfg.lambda_weight * res.curve.asr[static_cast<std::size_t>(res.curve.chosen_k - 1)];
    return res;
}

enum class BaselineKind { BottomK, RandomK };

inline std::string to_string(BaselineKind b) {
    return b == BaselineKind::BottomK ? "BL" : "BR";
}

/// Makeshift-baseline ASR at the same budget k, reusing the per-instance
/// ranks of a finished attack. Baselines perturb with BOTH_PICK_BEST: bottom
/// or random features carry no rule guidance.
inline double baseline_asr(const Classifier& clf, const AttackResult& attack, int k,
                           BaselineKind kind, const FeatureStats& stats,
                           const FeatureSchema& schema, std::uint64_t seed) {
    std::vector<AdversarialExample> results;
    const std::size_t m = attack.subset.indices.size();
    results.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::vector<std::size_t> feats =
            kind == BaselineKind::BottomK
                ? baseline_bl(attack.ranks[i], k)
                : baseline_br(attack.ranks[i], k,
                              derive_seed(seed, attack.subset.indices[i], 0xbb));
        AdversarialExample ex = attack_instance(clf, attack.subset.data.row(i),
                                                attack.subset.data.label(i), feats, stats, schema,
                                                DirectionPolicy::BothPickBest, {});
        results.push_back(std::move(ex));
    }
    return asr(results);
}

inline nlohmann::ordered_json adversarial_to_json(const AdversarialExample& ex) {
    nlohmann::ordered_json j;
    j["instance"] = ex.instance_index;
    j["original"] = ex.original;
    j["perturbed"] = ex.perturbed;
    j["modified"] = ex.modified;
    j["directions"] = ex.directions;
    j["p_before"] = ex.p_before;
    j["p_after"] = ex.p_after;
    j["flipped"] = ex.flipped;
    j["immovable"] = ex.immovable;
    j["k_used"] = ex.k_used;
    return j;
}

}  // namespace tabattack
