#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabattack/common.hpp"
#include "tabattack/dataset.hpp"
#include "tabattack/rng.hpp"
#include "tabattack/tree.hpp"

namespace tabattack {

enum class ModelKind { LR, DT, RF, MLP, ADA, BAG, GBC };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LR: return "LR";
        case ModelKind::DT: return "DT";
        case ModelKind::RF: return "RF";
        case ModelKind::MLP: return "MLP";
        case ModelKind::ADA: return "ADA";
        case ModelKind::BAG: return "BAG";
        case ModelKind::GBC: return "GBC";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "LR") return ModelKind::LR;
    if (s == "DT") return ModelKind::DT;
    if (s == "RF") return ModelKind::RF;
    if (s == "MLP") return ModelKind::MLP;
    if (s == "ADA") return ModelKind::ADA;
    if (s == "BAG") return ModelKind::BAG;
    if (s == "GBC") return ModelKind::GBC;
    throw ConfigError("unknown model kind '" + s + "'");
}

using Hyperparams = nlohmann::json;

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow; the per-sample logistic loss is
// softplus(z) - y*z.
inline double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

/// Pulls typed values out of a hyperparameter object, rejecting unknown keys
/// so typos fail loudly.
class HyperReader {
public:
    explicit HyperReader(const Hyperparams& hp, std::string model) : hp_(hp), model_(std::move(model)) {
        if (!hp_.is_null() && !hp_.is_object())
            throw ConfigError(model_ + ": hyperparams must be a JSON object");
    }

    double number(const std::string& key, double def, double lo, double hi) {
        used_.push_back(key);
        if (hp_.is_null() || !hp_.contains(key)) return def;
        if (!hp_[key].is_number())
            throw ConfigError(model_ + ": hyperparameter '" + key + "' must be a number");
        const double v = hp_[key].get<double>();
        if (!(v >= lo && v <= hi))
            throw ConfigError(model_ + ": hyperparameter '" + key + "' out of range");
        return v;
    }

    int integer(const std::string& key, int def, int lo, int hi) {
        used_.push_back(key);
        if (hp_.is_null() || !hp_.contains(key)) return def;
        if (!hp_[key].is_number_integer())
            throw ConfigError(model_ + ": hyperparameter '" + key + "' must be an integer");
        const int v = hp_[key].get<int>();
        if (v < lo || v > hi)
            throw ConfigError(model_ + ": hyperparameter '" + key + "' out of range");
        return v;
    }

    std::string choice(const std::string& key, const std::string& def,
                       const std::vector<std::string>& allowed) {
        used_.push_back(key);
        if (hp_.is_null() || !hp_.contains(key)) return def;
        if (!hp_[key].is_string())
            throw ConfigError(model_ + ": hyperparameter '" + key + "' must be a string");
        const std::string v = hp_[key].get<std::string>();
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
            throw ConfigError(model_ + ": invalid value '" + v + "' for '" + key + "'");
        return v;
    }

    std::vector<int> int_list(const std::string& key, std::vector<int> def, int lo, int hi,
                              std::size_t max_len) {
        used_.push_back(key);
        if (hp_.is_null() || !hp_.contains(key)) return def;
        if (!hp_[key].is_array() || hp_[key].empty() || hp_[key].size() > max_len)
            throw ConfigError(model_ + ": hyperparameter '" + key + "' must be a short array");
        std::vector<int> out;
        for (const auto& e : hp_[key]) {
            if (!e.is_number_integer())
                throw ConfigError(model_ + ": '" + key + "' entries must be integers");
            const int v = e.get<int>();
            if (v < lo || v > hi)
                throw ConfigError(model_ + ": '" + key + "' entry out of range");
            out.push_back(v);
        }
        return out;
    }

    void finish() const {
        if (hp_.is_null()) return;
        for (auto it = hp_.begin(); it != hp_.end(); ++it)
            if (std::find(used_.begin(), used_.end(), it.key()) == used_.end())
                throw ConfigError(model_ + ": unknown hyperparameter '" + it.key() + "'");
    }

private:
    const Hyperparams& hp_;
    std::string model_;
    std::vector<std::string> used_;
};

/// Column standardizer fitted on training data; zero-variance columns pass
/// through unscaled.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> scale;

    void fit(const Dataset& ds) {
        const FeatureStats fs = feature_stats(ds);
        mean = fs.mean;
        scale = fs.std;
        for (double& s : scale)
            if (s <= 0.0) s = 1.0;
    }

    void apply(std::span<const double> x, std::vector<double>& out) const {
        out.resize(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    }

    nlohmann::json to_json() const { return {{"mean", mean}, {"scale", scale}}; }
    static Scaler from_json(const nlohmann::json& j) {
        Scaler s;
        s.mean = j.at("mean").get<std::vector<double>>();
        s.scale = j.at("scale").get<std::vector<double>>();
        return s;
    }
};

inline void check_two_classes(const Dataset& ds, const std::string& model) {
    const std::size_t n1 = ds.count_label(1);
    if (n1 == 0 || n1 == ds.n_rows())
        throw DataError(model + ": training data has a single class");
}

}  // namespace detail

/// Black-box binary classifier contract: fit once, then predict_proba returns
/// a normalized (p0, p1) pair and predict is its argmax with ties going to
/// class 1. Fitted models are immutable, so predictions may be issued from
/// any number of threads.
class Classifier {
public:
    virtual ~Classifier() = default;

    ModelKind kind() const { return kind_; }
    const Hyperparams& hyperparams() const { return hyperparams_; }
    std::size_t n_features() const { return n_features_; }
    bool is_fitted() const { return fitted_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    std::pair<double, double> predict_proba(std::span<const double> x) const {
        if (!fitted_) throw DataError(to_string(kind_) + ": classifier is not fitted");
        if (x.size() != n_features_)
            throw DataError(to_string(kind_) + ": expected " + std::to_string(n_features_) +
                            " features, got " + std::to_string(x.size()));
        const double p1 = std::clamp(positive_probability(x), 0.0, 1.0);
        return {1.0 - p1, p1};
    }

    int predict(std::span<const double> x) const {
        const auto [p0, p1] = predict_proba(x);
        return p1 >= p0 ? 1 : 0;
    }

    virtual nlohmann::json to_json() const = 0;

protected:
    Classifier(ModelKind kind, Hyperparams hp) : kind_(kind), hyperparams_(std::move(hp)) {}

    virtual double positive_probability(std::span<const double> x) const = 0;

    ModelKind kind_;
    Hyperparams hyperparams_;
    std::size_t n_features_ = 0;
    bool fitted_ = false;
    std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Logistic regression: full-batch gradient descent on L2-regularized
// logistic loss over internally standardized features.
// ---------------------------------------------------------------------------

class LogisticRegression final : public Classifier {
public:
    LogisticRegression(const Hyperparams& hp, const Dataset& train, std::uint64_t /*seed*/)
        : Classifier(ModelKind::LR, hp) {
        detail::HyperReader r(hp, "LR");
        const double lr0 = r.number("learning_rate", 0.1, 1e-8, 1e3);
        const int epochs = r.integer("epochs", 300, 1, 1000000);
        const double l2 = r.number("l2", 1e-4, 0.0, 1e6);
        r.finish();
        detail::check_two_classes(train, "LR");

        scaler_.fit(train);
        const std::size_t n = train.n_rows();
        const std::size_t d = train.n_features();
        n_features_ = d;
        weights_.assign(d, 0.0);
        bias_ = 0.0;

        std::vector<double> xs(n * d);
        std::vector<double> buf;
        for (std::size_t i = 0; i < n; ++i) {
            scaler_.apply(train.row(i), buf);
            std::copy(buf.begin(), buf.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
        }

        double lr = lr0;
        double prev_loss = std::numeric_limits<double>::infinity();
        std::vector<double> grad(d);
        double grad_norm = 0.0;
        for (int epoch = 0; epoch < epochs; ++epoch) {
            std::fill(grad.begin(), grad.end(), 0.0);
            double grad_b = 0.0;
            double loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* xi = xs.data() + i * d;
                double z = bias_;
                for (std::size_t j = 0; j < d; ++j) z += weights_[j] * xi[j];
                const double y = static_cast<double>(train.label(i));
                const double err = detail::sigmoid(z) - y;
                for (std::size_t j = 0; j < d; ++j) grad[j] += err * xi[j];
                grad_b += err;
                loss += detail::softplus(z) - y * z;
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            loss *= inv_n;
            grad_norm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                grad[j] = grad[j] * inv_n + l2 * weights_[j];
                loss += 0.5 * l2 * weights_[j] * weights_[j];
                grad_norm = std::max(grad_norm, std::abs(grad[j]));
            }
            grad_b *= inv_n;
            grad_norm = std::max(grad_norm, std::abs(grad_b));

            if (loss > prev_loss + 1e-12) lr *= 0.5;
            if (std::abs(prev_loss - loss) < 1e-12) break;
            prev_loss = loss;

            for (std::size_t j = 0; j < d; ++j) weights_[j] -= lr * grad[j];
            bias_ -= lr * grad_b;
        }
        if (grad_norm > 1e-2)
            warnings_.push_back("LR: gradient descent did not fully converge");
        fitted_ = true;
    }

    nlohmann::json to_json() const override {
        return {{"scaler", scaler_.to_json()}, {"weights", weights_}, {"bias", bias_}};
    }

    static std::unique_ptr<LogisticRegression> from_json(const Hyperparams& hp,
                                                         const nlohmann::json& p) {
        auto m = std::unique_ptr<LogisticRegression>(new LogisticRegression(hp));
        m->scaler_ = detail::Scaler::from_json(p.at("scaler"));
        m->weights_ = p.at("weights").get<std::vector<double>>();
        m->bias_ = p.at("bias").get<double>();
        m->n_features_ = m->weights_.size();
        m->fitted_ = true;
        return m;
    }

private:
    explicit LogisticRegression(const Hyperparams& hp) : Classifier(ModelKind::LR, hp) {}

    double positive_probability(std::span<const double> x) const override {
        thread_local std::vector<double> buf;
        scaler_.apply(x, buf);
        double z = bias_;
        for (std::size_t j = 0; j < buf.size(); ++j) z += weights_[j] * buf[j];
        return detail::sigmoid(z);
    }

    detail::Scaler scaler_;
    std::vector<double> weights_;
    double bias_ = 0.0;
};

// ---------------------------------------------------------------------------
// Decision tree (CART).
// ---------------------------------------------------------------------------

class DecisionTreeClassifier final : public Classifier {
public:
    DecisionTreeClassifier(const Hyperparams& hp, const Dataset& train, std::uint64_t /*seed*/)
        : Classifier(ModelKind::DT, hp) {
        detail::HyperReader r(hp, "DT");
        TreeParams tp;
        tp.criterion = r.choice("criterion", "gini", {"gini", "entropy"}) == "gini"
                           ? SplitCriterion::Gini
                           : SplitCriterion::Entropy;
        tp.max_depth = r.integer("max_depth", -1, -1, 1000000);
        tp.min_samples_split = r.integer("min_samples_split", 2, 2, 1000000);
        tp.min_samples_leaf = r.integer("min_samples_leaf", 1, 1, 1000000);
        r.finish();
        detail::check_two_classes(train, "DT");

        n_features_ = train.n_features();
        std::vector<double> y(train.labels().begin(), train.labels().end());
        tree_.fit({train.values().data(), train.n_rows(), train.n_features()}, y, {}, tp);
        fitted_ = true;
    }

    const DecisionTree& tree() const { return tree_; }

    nlohmann::json to_json() const override;
    static std::unique_ptr<DecisionTreeClassifier> from_json(const Hyperparams& hp,
                                                             const nlohmann::json& p);

private:
    explicit DecisionTreeClassifier(const Hyperparams& hp) : Classifier(ModelKind::DT, hp) {}

    double positive_probability(std::span<const double> x) const override {
        return tree_.predict_value(x);
    }

    DecisionTree tree_;
};

// ---------------------------------------------------------------------------
// Random forest: bootstrapped CART trees with per-node feature subsampling,
// probability is the average of the trees' leaf distributions.
// ---------------------------------------------------------------------------

class RandomForest final : public Classifier {
public:
    RandomForest(const Hyperparams& hp, const Dataset& train, std::uint64_t seed)
        : Classifier(ModelKind::RF, hp) {
        detail::HyperReader r(hp, "RF");
        const int n_estimators = r.integer("n_estimators", 100, 1, 100000);
        TreeParams tp;
        tp.max_depth = r.integer("max_depth", -1, -1, 1000000);
        tp.min_samples_split = r.integer("min_samples_split", 2, 2, 1000000);
        tp.min_samples_leaf = r.integer("min_samples_leaf", 1, 1, 1000000);
        const std::string mf = r.choice("max_features", "sqrt", {"sqrt", "all"});
        tp.max_features = mf == "sqrt" ? -1 : 0;
        const bool bootstrap = r.integer("bootstrap", 1, 0, 1) != 0;
        r.finish();
        detail::check_two_classes(train, "RF");

        n_features_ = train.n_features();
        const std::size_t n = train.n_rows();
        std::vector<double> y(train.labels().begin(), train.labels().end());
        const MatrixView mv{train.values().data(), n, train.n_features()};

        trees_.resize(static_cast<std::size_t>(n_estimators));
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            Rng rng(derive_seed(seed, 0x8f, t));
            std::vector<double> w(n, 0.0);
            if (bootstrap) {
                for (std::size_t i = 0; i < n; ++i) w[rng.uniform_int(n)] += 1.0;
            } else {
                std::fill(w.begin(), w.end(), 1.0);
            }
            // rows with zero weight still reach the fitter; weight 0 keeps
            // them out of every impurity computation
            trees_[t].fit(mv, y, w, tp, &rng);
        }
        fitted_ = true;
    }

    const std::vector<DecisionTree>& trees() const { return trees_; }

    nlohmann::json to_json() const override;
    static std::unique_ptr<RandomForest> from_json(const Hyperparams& hp,
                                                   const nlohmann::json& p);

private:
    explicit RandomForest(const Hyperparams& hp) : Classifier(ModelKind::RF, hp) {}

    double positive_probability(std::span<const double> x) const override {
        double s = 0.0;
        for (const auto& t : trees_) s += t.predict_value(x);
        return s / static_cast<double>(trees_.size());
    }

    std::vector<DecisionTree> trees_;
};

// ---------------------------------------------------------------------------
// Bagging: bootstrap-aggregated trees; optionally each tree sees a random
// feature subset chosen once per estimator.
// ---------------------------------------------------------------------------

class BaggingClassifier final : public Classifier {
public:
    BaggingClassifier(const Hyperparams& hp, const Dataset& train, std::uint64_t seed)
        : Classifier(ModelKind::BAG, hp) {
        detail::HyperReader r(hp, "BAG");
        const int n_estimators = r.integer("n_estimators", 10, 1, 100000);
        TreeParams tp;
        tp.max_depth = r.integer("max_depth", -1, -1, 1000000);
        tp.min_samples_split = r.integer("min_samples_split", 2, 2, 1000000);
        tp.min_samples_leaf = r.integer("min_samples_leaf", 1, 1, 1000000);
        const int max_features = r.integer("max_features", 0, 0, 1 << 20);
        const int max_samples = r.integer("max_samples", 0, 0, 1 << 30);
        const bool bootstrap = r.integer("bootstrap", 1, 0, 1) != 0;
        r.finish();
        detail::check_two_classes(train, "BAG");

        n_features_ = train.n_features();
        const std::size_t n = train.n_rows();
        const std::size_t d = train.n_features();
        const std::size_t feat_count =
            max_features == 0 ? d : std::min<std::size_t>(static_cast<std::size_t>(max_features), d);
        const std::size_t samp_count =
            max_samples == 0 ? n : std::min<std::size_t>(static_cast<std::size_t>(max_samples), n);

        std::vector<double> y(train.labels().begin(), train.labels().end());
        trees_.resize(static_cast<std::size_t>(n_estimators));
        tree_features_.resize(trees_.size());
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            Rng rng(derive_seed(seed, 0xba, t));
            std::vector<std::size_t>& feats = tree_features_[t];
            if (feat_count < d) {
                feats = rng.sample_without_replacement(d, feat_count);
                std::sort(feats.begin(), feats.end());
            } else {
                feats.resize(d);
                for (std::size_t j = 0; j < d; ++j) feats[j] = j;
            }

            std::vector<std::size_t> rows(samp_count);
            if (bootstrap) {
                for (auto& i : rows) i = rng.uniform_int(n);
            } else {
                for (std::size_t i = 0; i < samp_count; ++i) rows[i] = i;
            }

            std::vector<double> xs(rows.size() * feats.size());
            std::vector<double> ys(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t j = 0; j < feats.size(); ++j)
                    xs[i * feats.size() + j] = train.at(rows[i], feats[j]);
                ys[i] = y[rows[i]];
            }
            trees_[t].fit({xs.data(), rows.size(), feats.size()}, ys, {}, tp);
        }
        fitted_ = true;
    }

    const std::vector<DecisionTree>& trees() const { return trees_; }

    nlohmann::json to_json() const override;
    static std::unique_ptr<BaggingClassifier> from_json(const Hyperparams& hp,
                                                        const nlohmann::json& p);

private:
    explicit BaggingClassifier(const Hyperparams& hp) : Classifier(ModelKind::BAG, hp) {}

    double positive_probability(std::span<const double> x) const override {
        thread_local std::vector<double> sub;
        double s = 0.0;
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            const auto& feats = tree_features_[t];
            sub.resize(feats.size());
            for (std::size_t j = 0; j < feats.size(); ++j) sub[j] = x[feats[j]];
            s += trees_[t].predict_value(sub);
        }
        return s / static_cast<double>(trees_.size());
    }

    std::vector<DecisionTree> trees_;
    std::vector<std::vector<std::size_t>> tree_features_;
};

// ---------------------------------------------------------------------------
// AdaBoost: discrete SAMME over depth-1 stumps trained with sample weights.
// Probability is the alpha-weighted vote share for class 1.
// ---------------------------------------------------------------------------

class AdaBoostClassifier final : public Classifier {
public:
    AdaBoostClassifier(const Hyperparams& hp, const Dataset& train, std::uint64_t /*seed*/)
        : Classifier(ModelKind::ADA, hp) {
        detail::HyperReader r(hp, "ADA");
        const int n_estimators = r.integer("n_estimators", 50, 1, 100000);
        const double learning_rate = r.number("learning_rate", 1.0, 1e-8, 100.0);
        r.finish();
        detail::check_two_classes(train, "ADA");

        n_features_ = train.n_features();
        const std::size_t n = train.n_rows();
        std::vector<double> y(train.labels().begin(), train.labels().end());
        const MatrixView mv{train.values().data(), n, train.n_features()};

        TreeParams tp;
        tp.max_depth = 1;
        std::vector<double> w(n, 1.0 / static_cast<double>(n));
        for (int t = 0; t < n_estimators; ++t) {
            DecisionTree stump;
            stump.fit(mv, y, w, tp);
            double err = 0.0;
            std::vector<char> wrong(n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                const int pred = stump.predict_value(train.row(i)) >= 0.5 ? 1 : 0;
                if (pred != train.label(i)) {
                    wrong[i] = 1;
                    err += w[i];
                }
            }
            if (err <= 0.0) {
                stumps_.push_back(std::move(stump));
                alphas_.push_back(learning_rate * std::log((1.0 - 1e-10) / 1e-10));
                break;
            }
            if (err >= 0.5) {
                if (stumps_.empty()) {
                    // degenerate data: keep one stump so the model is usable
                    stumps_.push_back(std::move(stump));
                    alphas_.push_back(1.0);
                    warnings_.push_back("ADA: first stump no better than chance");
                }
                break;
            }
            const double alpha = learning_rate * std::log((1.0 - err) / err);
            stumps_.push_back(std::move(stump));
            alphas_.push_back(alpha);
            double w_sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (wrong[i]) w[i] *= std::exp(alpha);
                w_sum += w[i];
            }
            for (double& wi : w) wi /= w_sum;
        }
        fitted_ = true;
    }

    std::size_t n_members() const { return stumps_.size(); }
    const DecisionTree& stump(std::size_t t) const { return stumps_[t]; }

    nlohmann::json to_json() const override;
    static std::unique_ptr<AdaBoostClassifier> from_json(const Hyperparams& hp,
                                                         const nlohmann::json& p);

private:
    explicit AdaBoostClassifier(const Hyperparams& hp) : Classifier(ModelKind::ADA, hp) {}

    double positive_probability(std::span<const double> x) const override {
        double vote1 = 0.0, total = 0.0;
        for (std::size_t t = 0; t < stumps_.size(); ++t) {
            const int pred = stumps_[t].predict_value(x) >= 0.5 ? 1 : 0;
            if (pred == 1) vote1 += alphas_[t];
            total += alphas_[t];
        }
        return total > 0.0 ? vote1 / total : 0.5;
    }

    std::vector<DecisionTree> stumps_;
    std::vector<double> alphas_;
};

// ---------------------------------------------------------------------------
// Gradient boosting: additive depth-limited regression trees on logistic-loss
// gradients with Newton leaf values.
// ---------------------------------------------------------------------------

class GradientBoostingClassifier final : public Classifier {
public:
    GradientBoostingClassifier(const Hyperparams& hp, const Dataset& train, std::uint64_t /*seed*/)
        : Classifier(ModelKind::GBC, hp) {
        detail::HyperReader r(hp, "GBC");
        const int n_estimators = r.integer("n_estimators", 100, 1, 100000);
        learning_rate_ = r.number("learning_rate", 0.1, 1e-8, 100.0);
        TreeParams tp;
        tp.task = TreeTask::Regression;
        tp.max_depth = r.integer("max_depth", 3, 1, 1000000);
        tp.min_samples_split = r.integer("min_samples_split", 2, 2, 1000000);
        tp.min_samples_leaf = r.integer("min_samples_leaf", 1, 1, 1000000);
        r.finish();
        detail::check_two_classes(train, "GBC");

        n_features_ = train.n_features();
        const std::size_t n = train.n_rows();
        const double p_prior =
            static_cast<double>(train.count_label(1)) / static_cast<double>(n);
        base_score_ = std::log(p_prior / (1.0 - p_prior));
        const MatrixView mv{train.values().data(), n, train.n_features()};

        std::vector<double> f(n, base_score_);
        std::vector<double> residual(n);
        for (int t = 0; t < n_estimators; ++t) {
            std::vector<double> p(n);
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = detail::sigmoid(f[i]);
                residual[i] = static_cast<double>(train.label(i)) - p[i];
            }
            DecisionTree tree;
            tree.fit(mv, residual, {}, tp);

            // Newton step per leaf: sum(residual) / sum(p (1-p))
            std::vector<double> num(tree.nodes().size(), 0.0);
            std::vector<double> den(tree.nodes().size(), 0.0);
            std::vector<int> leaf_of(n);
            for (std::size_t i = 0; i < n; ++i) {
                const int leaf = tree.leaf_index(train.row(i));
                leaf_of[i] = leaf;
                num[static_cast<std::size_t>(leaf)] += residual[i];
                den[static_cast<std::size_t>(leaf)] += p[i] * (1.0 - p[i]);
            }
            for (std::size_t nd = 0; nd < tree.nodes().size(); ++nd) {
                if (tree.nodes()[nd].feature >= 0) continue;
                const double v = num[nd] / std::max(den[nd], 1e-12);
                tree.set_leaf_value(static_cast<int>(nd), v);
            }
            for (std::size_t i = 0; i < n; ++i)
                f[i] += learning_rate_ *
                        tree.nodes()[static_cast<std::size_t>(leaf_of[i])].value;
            trees_.push_back(std::move(tree));
        }
        fitted_ = true;
    }

    double base_score() const { return base_score_; }
    double learning_rate() const { return learning_rate_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }

    nlohmann::json to_json() const override;
    static std::unique_ptr<GradientBoostingClassifier> from_json(const Hyperparams& hp,
                                                                 const nlohmann::json& p);

private:
    explicit GradientBoostingClassifier(const Hyperparams& hp) : Classifier(ModelKind::GBC, hp) {}

    double positive_probability(std::span<const double> x) const override {
        double f = base_score_;
        for (const auto& t : trees_) f += learning_rate_ * t.predict_value(x);
        return detail::sigmoid(f);
    }

    std::vector<DecisionTree> trees_;
    double base_score_ = 0.0;
    double learning_rate_ = 0.1;
};

// ---------------------------------------------------------------------------
// Multi-layer perceptron: one or two ReLU hidden layers, Glorot-uniform
// seeded init, full-batch gradient descent with step halving whenever the
// loss increases. Inputs are standardized internally.
// ---------------------------------------------------------------------------

class MlpClassifier final : public Classifier {
public:
    MlpClassifier(const Hyperparams& hp, const Dataset& train, std::uint64_t seed)
        : Classifier(ModelKind::MLP, hp) {
        detail::HyperReader r(hp, "MLP");
        hidden_ = r.int_list("hidden_layers", {16}, 1, 4096, 2);
        const double lr0 = r.number("learning_rate", 0.05, 1e-8, 1e3);
        const int epochs = r.integer("epochs", 300, 1, 1000000);
        const double l2 = r.number("l2", 1e-4, 0.0, 1e6);
        r.finish();
        detail::check_two_classes(train, "MLP");

        scaler_.fit(train);
        const std::size_t n = train.n_rows();
        const std::size_t d = train.n_features();
        n_features_ = d;

        std::vector<std::size_t> sizes{d};
        for (int h : hidden_) sizes.push_back(static_cast<std::size_t>(h));
        sizes.push_back(1);

        Rng rng(derive_seed(seed, 0x3d));
        weights_.clear();
        biases_.clear();
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::vector<double> w(fan_in * fan_out);
            for (double& v : w) v = (2.0 * rng.uniform() - 1.0) * a;
            weights_.push_back(std::move(w));
            biases_.emplace_back(fan_out, 0.0);
        }

        std::vector<double> xs(n * d);
        std::vector<double> buf;
        for (std::size_t i = 0; i < n; ++i) {
            scaler_.apply(train.row(i), buf);
            std::copy(buf.begin(), buf.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
        }

        const std::size_t n_layers = weights_.size();
        std::vector<std::vector<double>> acts(n_layers + 1);   // activations per layer
        std::vector<std::vector<double>> deltas(n_layers);     // backprop errors
        std::vector<std::vector<double>> gw(n_layers), gb(n_layers);
        for (std::size_t l = 0; l < n_layers; ++l) {
            gw[l].resize(weights_[l].size());
            gb[l].resize(biases_[l].size());
        }

        double lr = lr0;
        double prev_loss = std::numeric_limits<double>::infinity();
        for (int epoch = 0; epoch < epochs; ++epoch) {
            for (std::size_t l = 0; l < n_layers; ++l) {
                std::fill(gw[l].begin(), gw[l].end(), 0.0);
                std::fill(gb[l].begin(), gb[l].end(), 0.0);
            }
            double loss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acts[0].assign(xs.begin() + static_cast<std::ptrdiff_t>(i * d),
                               xs.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
                forward(acts);
                const double z = acts[n_layers][0];
                const double y = static_cast<double>(train.label(i));
                loss += detail::softplus(z) - y * z;

                deltas[n_layers - 1].assign(1, detail::sigmoid(z) - y);
                for (std::size_t l = n_layers - 1; l-- > 0;) {
                    const std::size_t out = biases_[l].size();
                    const std::size_t out_next = biases_[l + 1].size();
                    deltas[l].assign(out, 0.0);
                    for (std::size_t k = 0; k < out_next; ++k)
                        for (std::size_t j = 0; j < out; ++j)
                            deltas[l][j] += weights_[l + 1][k * out + j] * deltas[l + 1][k];
                    for (std::size_t j = 0; j < out; ++j)
                        if (acts[l + 1][j] <= 0.0) deltas[l][j] = 0.0;  // ReLU gate
                }
                for (std::size_t l = 0; l < n_layers; ++l) {
                    const std::size_t in = l == 0 ? d : biases_[l - 1].size();
                    for (std::size_t k = 0; k < biases_[l].size(); ++k) {
                        gb[l][k] += deltas[l][k];
                        for (std::size_t j = 0; j < in; ++j)
                            gw[l][k * in + j] += deltas[l][k] * acts[l][j];
                    }
                }
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            loss *= inv_n;
            for (std::size_t l = 0; l < n_layers; ++l)
                for (double w : weights_[l]) loss += 0.5 * l2 * w * w;

            if (loss > prev_loss + 1e-12) lr *= 0.5;
            if (std::abs(prev_loss - loss) < 1e-12) break;
            prev_loss = loss;

            for (std::size_t l = 0; l < n_layers; ++l) {
                for (std::size_t k = 0; k < weights_[l].size(); ++k)
                    weights_[l][k] -= lr * (gw[l][k] * inv_n + l2 * weights_[l][k]);
                for (std::size_t k = 0; k < biases_[l].size(); ++k)
                    biases_[l][k] -= lr * gb[l][k] * inv_n;
            }
        }
        if (!std::isfinite(prev_loss))
            warnings_.push_back("MLP: training loss diverged");
        fitted_ = true;
    }

    nlohmann::json to_json() const override;
    static std::unique_ptr<MlpClassifier> from_json(const Hyperparams& hp,
                                                    const nlohmann::json& p);

private:
    explicit MlpClassifier(const Hyperparams& hp) : Classifier(ModelKind::MLP, hp) {}

    void forward(std::vector<std::vector<double>>& acts) const {
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            const std::size_t in = acts[l].size();
            const std::size_t out = biases_[l].size();
            acts[l + 1].assign(out, 0.0);
            for (std::size_t k = 0; k < out; ++k) {
                double z = biases_[l][k];
                for (std::size_t j = 0; j < in; ++j) z += weights_[l][k * in + j] * acts[l][j];
                const bool is_output = l + 1 == weights_.size();
                acts[l + 1][k] = is_output ? z : std::max(0.0, z);
            }
        }
    }

    double positive_probability(std::span<const double> x) const override {
        thread_local std::vector<std::vector<double>> acts;
        acts.assign(weights_.size() + 1, {});
        scaler_.apply(x, acts[0]);
        forward(acts);
        return detail::sigmoid(acts.back()[0]);
    }

    detail::Scaler scaler_;
    std::vector<int> hidden_;
    std::vector<std::vector<double>> weights_;  // row-major out x in per layer
    std::vector<std::vector<double>> biases_;
};

// ---------------------------------------------------------------------------
// Factory + persistence
// ---------------------------------------------------------------------------

inline std::unique_ptr<Classifier> train(ModelKind kind, const Hyperparams& hp,
                                         const Dataset& train_data, std::uint64_t seed) {
    if (train_data.n_rows() == 0) throw DataError("train: empty training data");
    switch (kind) {
        case ModelKind::LR: return std::make_unique<LogisticRegression>(hp, train_data, seed);
        case ModelKind::DT: return std::make_unique<DecisionTreeClassifier>(hp, train_data, seed);
        case ModelKind::RF: return std::make_unique<RandomForest>(hp, train_data, seed);
        case ModelKind::MLP: return std::make_unique<MlpClassifier>(hp, train_data, seed);
        case ModelKind::ADA: return std::make_unique<AdaBoostClassifier>(hp, train_data, seed);
        case ModelKind::BAG: return std::make_unique<BaggingClassifier>(hp, train_data, seed);
        case ModelKind::GBC: return std::make_unique<GradientBoostingClassifier>(hp, train_data, seed);
    }
    throw ConfigError("train: unhandled model kind");
}

inline std::unique_ptr<Classifier> train(const std::string& kind, const Hyperparams& hp,
                                         const Dataset& train_data, std::uint64_t seed) {
    return train(model_kind_from_string(kind), hp, train_data, seed);
}

// --- DecisionTree JSON ---

inline nlohmann::json DecisionTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& nd : nodes_) {
        nodes.push_back({{"f", nd.feature},
                         {"t", nd.threshold},
                         {"l", nd.left},
                         {"r", nd.right},
                         {"v", nd.value},
                         {"w", nd.weight}});
    }
    return {{"n_features", n_features_}, {"nodes", nodes}};
}

inline DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
    DecisionTree t;
    t.n_features_ = j.at("n_features").get<std::size_t>();
    for (const auto& nj : j.at("nodes")) {
        Node nd;
        nd.feature = nj.at("f").get<int>();
        nd.threshold = nj.at("t").get<double>();
        nd.left = nj.at("l").get<int>();
        nd.right = nj.at("r").get<int>();
        nd.value = nj.at("v").get<double>();
        nd.weight = nj.at("w").get<double>();
        t.nodes_.push_back(nd);
    }
    if (t.nodes_.empty()) throw DataError("tree: empty node list in JSON");
    return t;
}

// --- model-specific JSON payloads ---

inline nlohmann::json DecisionTreeClassifier::to_json() const { return {{"tree", tree_.to_json()}}; }

inline std::unique_ptr<DecisionTreeClassifier> DecisionTreeClassifier::from_json(
    const Hyperparams& hp, const nlohmann::json& p) {
    auto m = std::unique_ptr<DecisionTreeClassifier>(new DecisionTreeClassifier(hp));
    m->tree_ = DecisionTree::from_json(p.at("tree"));
    m->n_features_ = m->tree_.n_features();
    m->fitted_ = true;
    return m;
}

inline nlohmann::json RandomForest::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"trees", trees}};
}

inline std::unique_ptr<RandomForest> RandomForest::from_json(const Hyperparams& hp,
                                                             const nlohmann::json& p) {
    auto m = std::unique_ptr<RandomForest>(new RandomForest(hp));
    for (const auto& tj : p.at("trees")) m->trees_.push_back(DecisionTree::from_json(tj));
    if (m->trees_.empty()) throw DataError("RF: no trees in JSON");
    m->n_features_ = m->trees_.front().n_features();
    m->fitted_ = true;
    return m;
}

inline nlohmann::json BaggingClassifier::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"trees", trees}, {"tree_features", tree_features_}, {"n_features", n_features_}};
}

inline std::unique_ptr<BaggingClassifier> BaggingClassifier::from_json(const Hyperparams& hp,
                                                                       const nlohmann::json& p) {
    auto m = std::unique_ptr<BaggingClassifier>(new BaggingClassifier(hp));
    for (const auto& tj : p.at("trees")) m->trees_.push_back(DecisionTree::from_json(tj));
    m->tree_features_ = p.at("tree_features").get<std::vector<std::vector<std::size_t>>>();
    if (m->trees_.empty() || m->tree_features_.size() != m->trees_.size())
        throw DataError("BAG: malformed JSON payload");
    m->n_features_ = p.at("n_features").get<std::size_t>();
    m->fitted_ = true;
    return m;
}

inline nlohmann::json AdaBoostClassifier::to_json() const {
    nlohmann::json stumps = nlohmann::json::array();
    for (const auto& s : stumps_) stumps.push_back(s.to_json());
    return {{"stumps", stumps}, {"alphas", alphas_}};
}

inline std::unique_ptr<AdaBoostClassifier> AdaBoostClassifier::from_json(const Hyperparams& hp,
                                                                         const nlohmann::json& p) {
    auto m = std::unique_ptr<AdaBoostClassifier>(new AdaBoostClassifier(hp));
    for (const auto& sj : p.at("stumps")) m->stumps_.push_back(DecisionTree::from_json(sj));
    m->alphas_ = p.at("alphas").get<std::vector<double>>();
    if (m->stumps_.empty() || m->alphas_.size() != m->stumps_.size())
        throw DataError("ADA: malformed JSON payload");
    m->n_features_ = m->stumps_.front().n_features();
    m->fitted_ = true;
    return m;
}

inline nlohmann::json GradientBoostingClassifier::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"trees", trees}, {"base_score", base_score_}, {"learning_rate", learning_rate_}};
}

inline std::unique_ptr<GradientBoostingClassifier> GradientBoostingClassifier::from_json(
    const Hyperparams& hp, const nlohmann::json& p) {
    auto m = std::unique_ptr<GradientBoostingClassifier>(new GradientBoostingClassifier(hp));
    for (const auto& tj : p.at("trees")) m->trees_.push_back(DecisionTree::from_json(tj));
    m->base_score_ = p.at("base_score").get<double>();
    m->learning_rate_ = p.at("learning_rate").get<double>();
    if (m->trees_.empty()) throw DataError("GBC: no trees in JSON");
    m->n_features_ = m->trees_.front().n_features();
    m->fitted_ = true;
    return m;
}

inline nlohmann::json MlpClassifier::to_json() const {
    return {{"scaler", scaler_.to_json()},
            {"hidden", hidden_},
            {"weights", weights_},
            {"biases", biases_}};
}

inline std::unique_ptr<MlpClassifier> MlpClassifier::from_json(const Hyperparams& hp,
                                                               const nlohmann::json& p) {
    auto m = std::unique_ptr<MlpClassifier>(new MlpClassifier(hp));
    m->scaler_ = detail::Scaler::from_json(p.at("scaler"));
    m->hidden_ = p.at("hidden").get<std::vector<int>>();
    m->weights_ = p.at("weights").get<std::vector<std::vector<double>>>();
    m->biases_ = p.at("biases").get<std::vector<std::vector<double>>>();
    if (m->weights_.empty() || m->weights_.size() != m->biases_.size())
        throw DataError("MLP: malformed JSON payload");
    m->n_features_ = m->scaler_.mean.size();
    m->fitted_ = true;
    return m;
}

/// Versioned model document: enough to reload and reproduce predictions
/// bit-for-bit.
inline nlohmann::json model_to_json(const Classifier& clf) {
    if (!clf.is_fitted()) throw DataError("model_to_json: classifier is not fitted");
    nlohmann::ordered_json doc;
    doc["format_version"] = 1;
    doc["kind"] = to_string(clf.kind());
    doc["hyperparams"] = clf.hyperparams().is_null() ? nlohmann::json::object() : clf.hyperparams();
    doc["n_features"] = clf.n_features();
    doc["params"] = clf.to_json();
    return doc;
}

inline std::unique_ptr<Classifier> model_from_json(const nlohmann::json& doc) {
    if (doc.at("format_version").get<int>() != 1)
        throw ConfigError("model_from_json: unsupported format_version");
    const ModelKind kind = model_kind_from_string(doc.at("kind").get<std::string>());
    const Hyperparams hp = doc.at("hyperparams");
    const nlohmann::json& p = doc.at("params");
    std::unique_ptr<Classifier> m;
    switch (kind) {
        case ModelKind::LR: m = LogisticRegression::from_json(hp, p); break;
        case ModelKind::DT: m = DecisionTreeClassifier::from_json(hp, p); break;
        case ModelKind::RF: m = RandomForest::from_json(hp, p); break;
        case ModelKind::MLP: m = MlpClassifier::from_json(hp, p); break;
        case ModelKind::ADA: m = AdaBoostClassifier::from_json(hp, p); break;
        case ModelKind::BAG: m = BaggingClassifier::from_json(hp, p); break;
        case ModelKind::GBC: m = GradientBoostingClassifier::from_json(hp, p); break;
    }
    const std::size_t nf = doc.at("n_features").get<std::size_t>();
    if (m->n_features() != nf)
        throw DataError("model_from_json: inconsistent feature count");
    return m;
}

inline void save_model(const Classifier& clf, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_model: cannot open '" + path + "'");
    out << model_to_json(clf).dump(2) << '\n';
    if (!out) throw DataError("save_model: write failed for '" + path + "'");
}

inline std::unique_ptr<Classifier> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_model: cannot open '" + path + "'");
    nlohmann::json doc;
    in >> doc;
    return model_from_json(doc);
}

}  // namespace tabattack
