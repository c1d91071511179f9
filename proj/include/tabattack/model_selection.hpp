#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabattack/dataset.hpp"
#include "tabattack/metrics.hpp"
#include "tabattack/models.hpp"
#include "tabattack/rng.hpp"

namespace tabattack {

/// Hyperparameter grid: per-parameter candidate lists, enumerated as a
/// cartesian product in declaration order (first axis slowest).
struct HyperGrid {
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

    static HyperGrid from_json(const nlohmann::ordered_json& j) {
        if (!j.is_object()) throw ConfigError("grid must be a JSON object");
        HyperGrid g;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!it.value().is_array() || it.value().empty())
                throw ConfigError("grid axis '" + it.key() + "' must be a non-empty array");
            std::vector<nlohmann::json> vals(it.value().begin(), it.value().end());
            g.axes.emplace_back(it.key(), std::move(vals));
        }
        if (g.axes.empty()) throw ConfigError("grid has no axes");
        return g;
    }

    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& [_, vals] : axes) n *= vals.size();
        return n;
    }

    Hyperparams point(std::size_t index) const {
        Hyperparams hp = nlohmann::json::object();
        for (std::size_t a = axes.size(); a-- > 0;) {
            const auto& [name, vals] = axes[a];
            hp[name] = vals[index % vals.size()];
            index /= vals.size();
        }
        return hp;
    }
};

struct CvResult {
    std::vector<MetricsBundle> folds;
    double mean_auc = 0.0;
    double mean_accuracy = 0.0;
    double mean_f1 = 0.0;
    bool auc_defined = true;  // false when every fold was single-class
};

/// Stratified fold assignment: class blocks are shuffled, concatenated and
/// dealt to folds cyclically, so fold sizes differ by at most one and each
/// fold keeps both classes whenever counts allow.
inline std::vector<std::vector<std::size_t>> make_folds(const Dataset& ds, int folds,
                                                        std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross_validate: folds must be >= 2");
    if (static_cast<std::size_t>(folds) > ds.n_rows())
        throw ConfigError("cross_validate: more folds than rows");
    Rng rng(derive_seed(seed, 0xcf));
    std::vector<std::size_t> order;
    for (int y : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.n_rows(); ++i)
            if (ds.label(i) == y) idx.push_back(i);
        rng.shuffle(idx);
        order.insert(order.end(), idx.begin(), idx.end());
    }
    std::vector<std::vector<std::size_t>> fold_rows(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < order.size(); ++i)
        fold_rows[i % static_cast<std::size_t>(folds)].push_back(order[i]);
    return fold_rows;
}

inline CvResult cross_validate(ModelKind kind, const Hyperparams& hp, const Dataset& data,
                               int folds, std::uint64_t seed) {
    const auto fold_rows = make_folds(data, folds, seed);
    CvResult res;
    double auc_sum = 0.0;
    std::size_t auc_n = 0;
    for (std::size_t f = 0; f < fold_rows.size(); ++f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < fold_rows.size(); ++g)
            if (g != f) train_idx.insert(train_idx.end(), fold_rows[g].begin(), fold_rows[g].end());
        const Dataset fold_train = data.take_rows(train_idx);
        const Dataset fold_test = data.take_rows(fold_rows[f]);

        const auto model = train(kind, hp, fold_train, derive_seed(seed, 0xf0, f));
        std::vector<double> scores(fold_test.n_rows());
        for (std::size_t i = 0; i < fold_test.n_rows(); ++i)
            scores[i] = model->predict_proba(fold_test.row(i)).second;
        MetricsBundle m = classification_metrics(fold_test.labels(), scores);
        res.mean_accuracy += m.accuracy;
        res.mean_f1 += m.f1;
        if (m.auc_defined) {
            auc_sum += m.auc;
            ++auc_n;
        }
        res.folds.push_back(std::move(m));
    }
    const double nf = static_cast<double>(fold_rows.size());
    res.mean_accuracy /= nf;
    res.mean_f1 /= nf;
    if (auc_n > 0) {
        res.mean_auc = auc_sum / static_cast<double>(auc_n);
    } else {
        res.mean_auc = std::numeric_limits<double>::quiet_NaN();
        res.auc_defined = false;
    }
    return res;
}

struct GridSearchResult {
    Hyperparams best_hyperparams;
    double best_mean_auc = 0.0;
    std::size_t best_index = 0;
    std::size_t n_evaluated = 0;
};

/// Exhaustive search maximizing mean CV AUC; ties keep the earliest grid
/// point in enumeration order.
inline GridSearchResult grid_search(ModelKind kind, const HyperGrid& grid, const Dataset& data,
                                    int folds, std::uint64_t seed) {
    const std::size_t n = grid.size();
    GridSearchResult out;
    out.n_evaluated = n;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Hyperparams hp = grid.point(i);
        const CvResult cv = cross_validate(kind, hp, data, folds, seed);
        const double score = cv.auc_defined ? cv.mean_auc : -1.0;
        if (i == 0 || score > best) {
            best = score;
            out.best_hyperparams = hp;
            out.best_mean_auc = cv.mean_auc;
            out.best_index = i;
        }
    }
    return out;
}

}  // namespace tabattack
