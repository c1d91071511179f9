#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tabattack/common.hpp"
#include "tabattack/rng.hpp"

namespace tabattack {

/// Ordered feature names plus per-feature validity flags. A feature marked
/// non_negative is a count/magnitude that must stay >= 0 after perturbation.
struct FeatureSchema {
    std::vector<std::string> names;
    std::vector<bool> non_negative;
    std::string label_name;

    std::size_t n_features() const { return names.size(); }

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }

    void validate() const {
        if (names.empty()) throw DataError("schema has no features");
        if (non_negative.size() != names.size())
            throw DataError("schema: non_negative flags do not match feature count");
        std::unordered_set<std::string> seen;
        for (const auto& n : names) {
            if (n.empty()) throw DataError("schema: empty feature name");
            if (!seen.insert(n).second)
                throw DataError("schema: duplicate feature name '" + n + "'");
        }
    }
};

/// Dense feature matrix with binary labels. Rows are stored row-major.
class Dataset {
public:
    Dataset() = default;
    Dataset(FeatureSchema schema, std::vector<double> values, std::vector<int> labels)
        : schema_(std::move(schema)), values_(std::move(values)), labels_(std::move(labels)) {
        validate();
    }

    const FeatureSchema& schema() const { return schema_; }
    std::size_t n_rows() const { return labels_.size(); }
    std::size_t n_features() const { return schema_.n_features(); }

    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * n_features(), n_features()};
    }
    double at(std::size_t i, std::size_t j) const { return values_[i * n_features() + j]; }
    int label(std::size_t i) const { return labels_[i]; }
    const std::vector<int>& labels() const { return labels_; }
    const std::vector<double>& values() const { return values_; }

    std::size_t count_label(int y) const {
        return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), y));
    }

    void append_row(std::span<const double> x, int y) {
        values_.insert(values_.end(), x.begin(), x.end());
        labels_.push_back(y);
    }

    /// Subset by row indices, order preserved as given.
    Dataset take_rows(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.schema_ = schema_;
        out.values_.reserve(idx.size() * n_features());
        out.labels_.reserve(idx.size());
        for (std::size_t i : idx) {
            const auto r = row(i);
            out.values_.insert(out.values_.end(), r.begin(), r.end());
            out.labels_.push_back(labels_[i]);
        }
        return out;
    }

    /// Subset by feature (column) indices; keeps every row.
    Dataset take_features(const std::vector<std::size_t>& feat_idx) const {
        Dataset out;
        out.schema_.label_name = schema_.label_name;
        for (std::size_t j : feat_idx) {
            out.schema_.names.push_back(schema_.names[j]);
            out.schema_.non_negative.push_back(schema_.non_negative[j]);
        }
        out.values_.reserve(n_rows() * feat_idx.size());
        for (std::size_t i = 0; i < n_rows(); ++i)
            for (std::size_t j : feat_idx) out.values_.push_back(at(i, j));
        out.labels_ = labels_;
        return out;
    }

    void validate() const {
        schema_.validate();
        if (values_.size() != labels_.size() * schema_.n_features())
            throw DataError("dataset: row count does not match label count");
        for (double v : values_)
            if (!std::isfinite(v)) throw DataError("dataset: non-finite cell value");
        for (int y : labels_)
            if (y != 0 && y != 1) throw DataError("dataset: label outside {0,1}");
    }

private:
    FeatureSchema schema_;
    std::vector<double> values_;  // n_rows * n_features
    std::vector<int> labels_;
};

/// Per-feature mean and sample standard deviation (divisor n-1), computed on
/// training rows. Drives the +/- one-STD perturbation.
struct FeatureStats {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> std;

    double std_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return std[i];
        throw DataError("feature_stats: unknown feature '" + name + "'");
    }
};

struct SplitConfig {
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
    bool stratified = false;
};

/// Seeded shuffle-and-cut split. |train| = round(n * train_fraction),
/// clamped so both sides stay non-empty.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitConfig& cfg) {
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw ConfigError("split: train_fraction must be in (0,1)");
    const std::size_t n = ds.n_rows();
    if (n < 2) throw DataError("split: need at least 2 rows");

    Rng rng(cfg.seed);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    auto cut = [&](std::vector<std::size_t>& idx, std::size_t n_train) {
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
    };

    if (cfg.stratified) {
        for (int y : {0, 1}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < n; ++i)
                if (ds.label(i) == y) idx.push_back(i);
            if (idx.empty()) continue;
            rng.shuffle(idx);
            if (idx.size() == 1) {
                train_idx.push_back(idx[0]);
                continue;
            }
            cut(idx, static_cast<std::size_t>(std::llround(
                         static_cast<double>(idx.size()) * cfg.train_fraction)));
        }
    } else {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx);
        cut(idx, static_cast<std::size_t>(std::llround(
                     static_cast<double>(n) * cfg.train_fraction)));
    }
    return {ds.take_rows(train_idx), ds.take_rows(test_idx)};
}

/// Two-pass mean / sample standard deviation per feature.
inline FeatureStats feature_stats(const Dataset& train) {
    const std::size_t n = train.n_rows();
    if (n < 2) throw DataError("feature_stats: need at least 2 rows");
    const std::size_t d = train.n_features();
    FeatureStats fs;
    fs.names = train.schema().names;
    fs.mean.assign(d, 0.0);
    fs.std.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = train.row(i);
        for (std::size_t j = 0; j < d; ++j) fs.mean[j] += r[j];
    }
    for (std::size_t j = 0; j < d; ++j) fs.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = train.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double dlt = r[j] - fs.mean[j];
            fs.std[j] += dlt * dlt;
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        fs.std[j] = std::sqrt(fs.std[j] / static_cast<double>(n - 1));
    return fs;
}

}  // namespace tabattack
