#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tabattack/common.hpp"
#include "tabattack/rng.hpp"

namespace tabattack {

/// Row-major matrix view used by the tree fitter so it can train on datasets
/// and on raw sample buffers alike.
struct MatrixView {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::span<const double> row(std::size_t i) const { return {data + i * cols, cols}; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

enum class TreeTask { Classification, Regression };
enum class SplitCriterion { Gini, Entropy };

struct TreeParams {
    TreeTask task = TreeTask::Classification;
    SplitCriterion criterion = SplitCriterion::Gini;
    int max_depth = -1;  // <= 0 means unlimited
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    int max_features = 0;  // 0 all, -1 round(sqrt(d)), else that many
};

/// CART decision tree with sample weights. Classification nodes carry the
/// weighted positive-class fraction; regression nodes carry the weighted
/// mean target. Splits are x[feature] <= threshold to the left, thresholds
/// are midpoints between distinct sorted values, and ties between candidate
/// splits keep the lowest feature index and threshold, so fitting is fully
/// deterministic for a fixed feature-subsampling stream.
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;   // p1 or mean target at this node
        double weight = 0.0;  // weighted sample mass
    };

    void fit(const MatrixView& x, const std::vector<double>& y,
             const std::vector<double>& weights, const TreeParams& params,
             Rng* feature_rng = nullptr) {
        if (x.rows == 0) throw DataError("tree: empty training data");
        if (y.size() != x.rows) throw DataError("tree: target length mismatch");
        params_ = params;
        n_features_ = x.cols;
        nodes_.clear();
        importances_.assign(x.cols, 0.0);

        const std::vector<double>* w = &weights;
        std::vector<double> ones;
        if (weights.empty()) {
            ones.assign(x.rows, 1.0);
            w = &ones;
        } else if (weights.size() != x.rows) {
            throw DataError("tree: weight length mismatch");
        }
        // only the weighted support participates (bootstrap weights may be 0)
        std::vector<std::size_t> items;
        items.reserve(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i)
            if ((*w)[i] > 0.0) items.push_back(i);
        if (items.empty()) throw DataError("tree: all sample weights are zero");
        root_weight_ = 0.0;
        for (std::size_t i : items) root_weight_ += (*w)[i];
        build(x, y, *w, items, 0, feature_rng);

        double total = 0.0;
        for (double v : importances_) total += v;
        if (total > 0.0)
            for (double& v : importances_) v /= total;
    }

    bool is_fitted() const { return !nodes_.empty(); }
    std::size_t n_features() const { return n_features_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<double>& feature_importances() const { return importances_; }
    std::size_t depth() const { return depth_of(0); }

    double predict_value(std::span<const double> x) const {
        return nodes_[static_cast<std::size_t>(leaf_index(x))].value;
    }

    int leaf_index(std::span<const double> x) const {
        int i = 0;
        while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
            const Node& nd = nodes_[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return i;
    }

    /// Internal nodes visited by x, root first (leaf excluded).
    std::vector<int> decision_path(std::span<const double> x) const {
        std::vector<int> path;
        int i = 0;
        while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
            path.push_back(i);
            const Node& nd = nodes_[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return path;
    }

    void set_leaf_value(int node, double v) { nodes_[static_cast<std::size_t>(node)].value = v; }

    nlohmann::json to_json() const;
    static DecisionTree from_json(const nlohmann::json& j);

private:
    double node_impurity(double w_total, double stat1, double stat2) const {
        if (w_total <= 0.0) return 0.0;
        if (params_.task == TreeTask::Classification) {
            const double p1 = stat1 / w_total;
            const double p0 = 1.0 - p1;
            if (params_.criterion == SplitCriterion::Gini) return 1.0 - p0 * p0 - p1 * p1;
            double h = 0.0;
            if (p0 > 0.0) h -= p0 * std::log2(p0);
            if (p1 > 0.0) h -= p1 * std::log2(p1);
            return h;
        }
        const double mean = stat1 / w_total;
        return std::max(0.0, stat2 / w_total - mean * mean);
    }

    int build(const MatrixView& x, const std::vector<double>& y,
              const std::vector<double>& w, const std::vector<std::size_t>& items,
              int depth, Rng* feature_rng) {
        double w_total = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t i : items) {
            w_total += w[i];
            s1 += w[i] * y[i];
            s2 += w[i] * y[i] * y[i];
        }
        const double value = w_total > 0.0 ? s1 / w_total : 0.0;
        const double impurity = node_impurity(w_total, s1, s2);

        const int node_id = static_cast<int>(nodes_.size());
        nodes_.push_back({-1, 0.0, -1, -1, value, w_total});

        const bool depth_ok = params_.max_depth <= 0 || depth < params_.max_depth;
        if (!depth_ok || impurity <= 1e-12 ||
            items.size() < static_cast<std::size_t>(std::max(2, params_.min_samples_split)))
            return node_id;

        // candidate features, ascending so split ties resolve to the lowest index
        std::vector<std::size_t> feats;
        std::size_t n_candidates = x.cols;
        if (params_.max_features == -1)
            n_candidates = static_cast<std::size_t>(
                std::max(1.0, std::round(std::sqrt(static_cast<double>(x.cols)))));
        else if (params_.max_features > 0)
            n_candidates = std::min<std::size_t>(static_cast<std::size_t>(params_.max_features), x.cols);
        if (n_candidates < x.cols && feature_rng != nullptr) {
            feats = feature_rng->sample_without_replacement(x.cols, n_candidates);
            std::sort(feats.begin(), feats.end());
        } else {
            feats.resize(x.cols);
            for (std::size_t j = 0; j < x.cols; ++j) feats[j] = j;
        }

        double best_gain = 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_samples_leaf));

        std::vector<std::pair<double, std::size_t>> sorted;
        sorted.reserve(items.size());
        for (std::size_t f : feats) {
            sorted.clear();
            for (std::size_t i : items) sorted.emplace_back(x.at(i, f), i);
            std::sort(sorted.begin(), sorted.end());

            double wl = 0.0, s1l = 0.0, s2l = 0.0;
            for (std::size_t i = 1; i < sorted.size(); ++i) {
                const std::size_t idx = sorted[i - 1].second;
                wl += w[idx];
                s1l += w[idx] * y[idx];
                s2l += w[idx] * y[idx] * y[idx];
                if (sorted[i - 1].first == sorted[i].first) continue;
                if (i < min_leaf || sorted.size() - i < min_leaf) continue;
                const double wr = w_total - wl;
                if (wl <= 0.0 || wr <= 0.0) continue;
                const double imp_l = node_impurity(wl, s1l, s2l);
                const double imp_r = node_impurity(wr, s1 - s1l, s2 - s2l);
                const double gain = impurity - (wl * imp_l + wr * imp_r) / w_total;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (sorted[i - 1].first + sorted[i].first);
                }
            }
        }
        if (best_feature < 0) return node_id;

        std::vector<std::size_t> left_items, right_items;
        for (std::size_t i : items) {
            if (x.at(i, static_cast<std::size_t>(best_feature)) <= best_threshold)
                left_items.push_back(i);
            else
                right_items.push_back(i);
        }
        if (left_items.empty() || right_items.empty()) return node_id;

        importances_[static_cast<std::size_t>(best_feature)] +=
            (w_total / root_weight_) * best_gain;

        nodes_[static_cast<std::size_t>(node_id)].feature = best_feature;
        nodes_[static_cast<std::size_t>(node_id)].threshold = best_threshold;
        const int left = build(x, y, w, left_items, depth + 1, feature_rng);
        nodes_[static_cast<std::size_t>(node_id)].left = left;
        const int right = build(x, y, w, right_items, depth + 1, feature_rng);
        nodes_[static_cast<std::size_t>(node_id)].right = right;
        return node_id;
    }

    std::size_t depth_of(std::size_t i) const {
        const Node& nd = nodes_[i];
        if (nd.feature < 0) return 0;
        return 1 + std::max(depth_of(static_cast<std::size_t>(nd.left)),
                            depth_of(static_cast<std::size_t>(nd.right)));
    }

    std::vector<Node> nodes_;
    std::vector<double> importances_;
    TreeParams params_;
    std::size_t n_features_ = 0;
    double root_weight_ = 0.0;
};

}  // namespace tabattack
